"""Command-line entry point: ``maskvid <subcommand> [flags]``.

Exit status is 0 on success, 2 on configuration errors and 3 on runtime errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .core import TASKS, ConfigError, DimensionError, TokenGrid, VocabularyError, make_rng
from .decoder import DecodeConfig, PRESETS, generate
from .harness import EvalReport, RunConfig, StageError, evaluate, gen_synthetic, run_experiment
from .masking import SCHEDULES
from .predictor import OraclePredictor, PottsParams, PottsPredictor, train
from .tasks import TaskSpec
from .tokenizer import Codebook, encode, fit_codebook

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _load_config(args) -> RunConfig:
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        cfg.validate()
    except (OSError, io.FormatError, DimensionError, VocabularyError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def save_dataset(directory: Path, videos, labels) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i, v in enumerate(videos):
        io.write_bytes(directory / f"video_{i:05d}.mgvd", io.video_to_bytes(v))
    (directory / "labels.txt").write_text("".join(f"{y}\n" for y in labels))


def load_dataset(directory) -> tuple[list, list[int]]:
    directory = Path(directory)
    files = sorted(directory.glob("video_*.mgvd"))
    if not files:
        raise ConfigError(f"no videos found in {directory}")
    videos = [io.video_from_bytes(f.read_bytes()) for f in files]
    labels = [int(x) for x in (directory / "labels.txt").read_text().split()]
    if len(labels) != len(videos):
        raise ConfigError(f"{directory}: {len(videos)} videos but {len(labels)} labels")
    return videos, labels


def load_codebook(path) -> Codebook:
    return Codebook(io.codebook_from_bytes(Path(path).read_bytes()))


def load_params(path) -> PottsParams:
    return PottsParams(*io.params_from_bytes(Path(path).read_bytes()))


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out = _out(args)
    for split in ("train", "eval"):
        videos, labels = gen_synthetic(cfg.dataset(split))
        save_dataset(out / split, videos, labels)
    (out / "config.kv").write_text(cfg.dumps())
    return EXIT_OK


def cmd_fit_tokenizer(args) -> int:
    cfg = _load_config(args)
    videos, _ = load_dataset(args.data)
    codebook, report = fit_codebook(videos, cfg.shape, cfg.v_vis, cfg.max_iter, make_rng(cfg.seed_for("tokenizer")))
    out = _out(args)
    io.write_bytes(out / "codebook.mgcb", io.codebook_to_bytes(codebook.centroids))
    lines = ["iteration,distortion"] + [f"{i},{d!r}" for i, d in enumerate(report.distortion_per_iter)]
    (out / "fit_report.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    videos, labels = load_dataset(args.data)
    codebook = load_codebook(args.codebook)
    params = PottsParams.zeros(cfg.v_vis, cfg.shape.n, cfg.n_classes)
    result = train(params, videos, labels, codebook, cfg.shape, cfg.layout, cfg.tasks, cfg.train,
                   make_rng(cfg.seed_for("train")), base_task=cfg.task)
    out = _out(args)
    p = result.params
    io.write_bytes(out / "params.mgpt", io.params_to_bytes(p.A, p.b, p.g, p.h))
    (out / "loss_curve.csv").write_text(EvalReport(loss_curve=result.curve).loss_csv())
    return EXIT_OK


def _task_from_args(args, cfg: RunConfig) -> TaskSpec:
    kind = args.task or cfg.task.kind
    class_id = args.class_id if args.class_id is not None else cfg.task.class_id
    return replace(cfg.task, kind=kind, class_id=class_id if kind in ("CG", "CFP") else None)


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    spec = _task_from_args(args, cfg)
    base = PRESETS[args.preset] if args.preset else cfg.decode
    dcfg = DecodeConfig(
        steps=args.steps if args.steps is not None else base.steps,
        temperature=args.temperature if args.temperature is not None else base.temperature,
        schedule=args.schedule or base.schedule,
        seed=args.seed if args.seed is not None else cfg.decode.seed,
    )
    codebook = load_codebook(args.codebook)
    video = io.video_from_bytes(Path(args.inp).read_bytes()) if args.inp else None
    if video is None and spec.kind != "CG":
        raise ConfigError(f"task {spec.kind} needs --in VIDEO")
    shape = cfg.shape
    if args.oracle:
        if video is None:
            raise ConfigError("--oracle needs --in VIDEO to know the ground truth")
        predictor = OraclePredictor(encode(video, codebook, shape), cfg.layout, cfg.oracle_eps)
    elif args.params:
        predictor = PottsPredictor(load_params(args.params), cfg.layout)
    else:
        raise ConfigError("generate needs --params FILE or --oracle")
    out_video, grid, trace = generate(video, spec, codebook, shape, predictor, dcfg, cfg.layout, return_tokens=True)
    out = _out(args)
    io.write_bytes(out / "generated.mgvd", io.video_to_bytes(out_video))
    io.write_bytes(out / "tokens.mgtk", io.tokens_to_bytes(grid))
    if args.trace:
        for t, snap in enumerate(trace.steps):
            step = TokenGrid(grid.shape, snap.zhat, grid.v_vis)
            io.write_bytes(out / "trace" / f"step_{t:02d}.mgtk", io.tokens_to_bytes(step))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    videos, labels = load_dataset(args.data)
    codebook = load_codebook(args.codebook)
    if args.oracle:
        cfg = replace(cfg, predictor="oracle")
        params = PottsParams.zeros(cfg.v_vis, cfg.shape.n, cfg.n_classes)
    elif args.params:
        params = load_params(args.params)
    else:
        raise ConfigError("evaluate needs --params FILE or --oracle")
    report = EvalReport(tasks=evaluate(cfg, videos, labels, codebook, params))
    (_out(args) / "report.kv").write_text(report.dumps())
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    report = run_experiment(cfg, _out(args))
    print(report.dumps(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskvid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="key = value run config file")
        p.add_argument("--seed", type=int, help="override the run seed (decode seed for generate)")
        p.add_argument("--out", required=out_required, help="output directory")
        return p

    p = common(sub.add_parser("gen-data", help="write synthetic train/eval videos"))
    p.set_defaults(func=cmd_gen_data)

    p = common(sub.add_parser("fit-tokenizer", help="fit the k-means block codebook"))
    p.add_argument("--data", required=True, help="directory of .mgvd videos")
    p.set_defaults(func=cmd_fit_tokenizer)

    p = common(sub.add_parser("train", help="train the token predictor"))
    p.add_argument("--data", required=True)
    p.add_argument("--codebook", required=True)
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("generate", help="decode one video for a task"))
    p.add_argument("--codebook", required=True)
    p.add_argument("--params", help="trained predictor parameters")
    p.add_argument("--oracle", action="store_true", help="decode with the ground-truth oracle")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--class", dest="class_id", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--schedule", choices=SCHEDULES)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--in", dest="inp", help="input video (.mgvd); optional for CG")
    p.add_argument("--trace", action="store_true", help="write per-step token files under OUT/trace")
    p.set_defaults(func=cmd_generate)

    p = common(sub.add_parser("evaluate", help="decode every evaluation task and report metrics"))
    p.add_argument("--data", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--params")
    p.add_argument("--oracle", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = common(sub.add_parser("run", help="full pipeline: data, tokenizer, training, evaluation"))
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        code = EXIT_CONFIG if isinstance(exc.cause, ConfigError) else EXIT_RUNTIME
        print(f"error {exc}", file=sys.stderr)
        return code
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
