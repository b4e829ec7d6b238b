"""Run the default desk-scale experiment and print its report.

    python3 scripts/run_default.py --out runs/default [--seed 0] [--n-eval 100]
"""

import argparse
from dataclasses import replace

from maskvid.harness import RunConfig, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-eval", type=int, default=100)
    args = ap.parse_args()

    cfg = replace(RunConfig(), seed=args.seed, n_eval=args.n_eval)
    report = run_experiment(cfg, args.out)
    print(report.dumps(), end="")
    print("# timing (cumulative seconds)")
    for stage, secs in report.wall_clock.items():
        print(f"#   {stage:<10} {secs:7.2f}")


if __name__ == "__main__":
    main()
