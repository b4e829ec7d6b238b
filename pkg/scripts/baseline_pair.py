"""Trained vs untrained token accuracy on one task across several seeds.

The seed-0 pair for FP is the frozen reference used by the acceptance suite.

    python3 scripts/baseline_pair.py --seeds 0 1 2 --task FP
"""

import argparse
from dataclasses import replace

from maskvid.core import TASKS
from maskvid.harness import RunConfig, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--task", choices=TASKS, default="FP")
    ap.add_argument("--n-eval", type=int, default=100)
    args = ap.parse_args()

    print("seed,trained,untrained,margin")
    for seed in args.seeds:
        cfg = replace(RunConfig(), seed=seed, n_eval=args.n_eval, eval_tasks=(args.task,))
        m = run_experiment(cfg).tasks[args.task]
        print(f"{seed},{m.token_accuracy:.6f},{m.baseline_accuracy:.6f},{m.token_accuracy - m.baseline_accuracy:.6f}")


if __name__ == "__main__":
    main()
