"""Synthetic data, metrics, run configuration and the end-to-end experiment."""

from __future__ import annotations

import csv
import io as _io
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import io
from .core import (
    TASKS,
    ConfigError,
    DimensionError,
    GridShape,
    TokenGrid,
    VideoTensor,
    VocabularyLayout,
    derive_seed,
    make_rng,
)
from .decoder import DecodeConfig, commit_decode
from .predictor import (
    LossBreakdown,
    OraclePredictor,
    PottsParams,
    PottsPredictor,
    TrainConfig,
    task_instance,
    train,
)
from .tasks import TaskSpec, make_condition
from .tokenizer import Codebook, decode, encode, fit_codebook

PSNR_CAP = 99.0

# (dy, dx) per frame; class k moves along DIRECTIONS[k]
DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (-1, -1), (1, -1), (-1, 1))


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    n_videos: int = 200
    dims: tuple[int, int, int] = (16, 32, 32)
    n_classes: int = 4
    rect: int = 8
    levels: tuple[float, ...] = (0.5, 0.75, 1.0)
    seed: int = 0


def gen_synthetic(spec: SyntheticDatasetSpec):
    """Rectangles sliding one pixel per frame, wrapping at the borders.

    Returns ``(videos, labels)``; the label is the motion direction.
    """
    T, H, W = spec.dims
    if spec.rect < 1 or spec.rect > min(H, W):
        raise ConfigError(f"rectangle of {spec.rect} px does not fit a {H}x{W} frame")
    if not 1 <= spec.n_classes <= len(DIRECTIONS):
        raise ConfigError(f"n_classes must lie in [1, {len(DIRECTIONS)}]")
    if not spec.levels or any(not 0.0 <= lv <= 1.0 for lv in spec.levels):
        raise ConfigError("intensity levels must be non-empty and within [0, 1]")
    rng = make_rng(spec.seed)
    videos, labels = [], []
    for _ in range(spec.n_videos):
        label = int(rng.integers(spec.n_classes))
        y0 = int(rng.integers(H))
        x0 = int(rng.integers(W))
        level = spec.levels[int(rng.integers(len(spec.levels)))]
        dy, dx = DIRECTIONS[label]
        frames = np.zeros((T, H, W, 1))
        for tau in range(T):
            ys = (y0 + dy * tau + np.arange(spec.rect)) % H
            xs = (x0 + dx * tau + np.arange(spec.rect)) % W
            frames[tau][np.ix_(ys, xs)] = level
        videos.append(VideoTensor(frames))
        labels.append(label)
    return videos, labels


def token_accuracy(pred: TokenGrid, truth: TokenGrid, region=None) -> float:
    """Fraction of matching ids, optionally only where ``region`` is True."""
    if pred.shape.lattice != truth.shape.lattice:
        raise DimensionError("token grids differ in shape")
    eq = pred.ids == truth.ids
    if region is not None:
        region = np.asarray(region, dtype=bool).reshape(-1)
        if region.size != eq.size:
            raise DimensionError("region mask does not match the grid")
        if not region.any():
            return float("nan")
        eq = eq[region]
    return float(eq.mean())


def psnr(a: VideoTensor, b: VideoTensor) -> float:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"shapes differ: {a.data.shape} vs {b.data.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


# -- configuration ------------------------------------------------------------


@dataclass
class RunConfig:
    seed: int = 0
    # data
    n_train: int = 200
    n_eval: int = 100
    dims: tuple[int, int, int] = (16, 32, 32)
    n_classes: int = 4
    rect: int = 8
    levels: tuple[float, ...] = (0.5, 0.75, 1.0)
    # tokenizer
    v_vis: int = 32
    blocks: tuple[int, int, int] = (4, 8, 8)
    max_iter: int = 20
    # predictor
    predictor: str = "potts"  # potts | oracle | untrained
    oracle_eps: float = 0.0
    train: TrainConfig = field(default_factory=TrainConfig)
    tasks: tuple[str, ...] = TASKS
    task: TaskSpec = field(default_factory=lambda: TaskSpec("FP"))
    # decoding / evaluation
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    eval_tasks: tuple[str, ...] = TASKS
    baseline: bool = True

    def validate(self) -> None:
        GridShape.for_video(self.dims, self.blocks)
        for kind in (*self.tasks, *self.eval_tasks):
            if kind not in TASKS:
                raise ConfigError(f"unknown task {kind!r}")
        if self.predictor not in ("potts", "oracle", "untrained"):
            raise ConfigError(f"unknown predictor kind {self.predictor!r}")
        if self.task.class_id is not None and not 0 <= self.task.class_id < self.n_classes:
            raise ConfigError("task.class_id outside the class vocabulary")
        if self.n_train < 1 or self.n_eval < 0:
            raise ConfigError("n_train must be >= 1 and n_eval >= 0")
        if self.train.lr < 0 or self.train.epochs < 0 or self.train.batch_size < 1:
            raise ConfigError("invalid predictor training settings")

    @property
    def shape(self) -> GridShape:
        return GridShape.for_video(self.dims, self.blocks)

    @property
    def layout(self) -> VocabularyLayout:
        return VocabularyLayout(self.n_classes, self.v_vis)

    def dataset(self, split: str) -> SyntheticDatasetSpec:
        n = self.n_train if split == "train" else self.n_eval
        return SyntheticDatasetSpec(n, tuple(self.dims), self.n_classes, self.rect, tuple(self.levels),
                                    derive_seed(self.seed, 0 if split == "train" else 1))

    def seed_for(self, stage: str) -> int:
        return derive_seed(self.seed, 2 + ("tokenizer", "train", "decode").index(stage))

    def to_kv(self) -> dict:
        t = self.task
        return {
            "seed": self.seed,
            "data.n_train": self.n_train,
            "data.n_eval": self.n_eval,
            "data.t": self.dims[0],
            "data.h": self.dims[1],
            "data.w": self.dims[2],
            "data.n_classes": self.n_classes,
            "data.rect": self.rect,
            "data.levels": list(self.levels),
            "tokenizer.v_vis": self.v_vis,
            "tokenizer.block_t": self.blocks[0],
            "tokenizer.block_h": self.blocks[1],
            "tokenizer.block_w": self.blocks[2],
            "tokenizer.max_iter": self.max_iter,
            "predictor.kind": self.predictor,
            "predictor.oracle_eps": self.oracle_eps,
            "predictor.lr": self.train.lr,
            "predictor.epochs": self.train.epochs,
            "predictor.batch_size": self.train.batch_size,
            "predictor.label_smoothing": self.train.label_smoothing,
            "predictor.schedule": self.train.schedule,
            "train.tasks": list(self.tasks),
            "task.kind": t.kind,
            "task.t": t.t,
            "task.t1": t.t1,
            "task.t2": t.t2,
            "task.h_frac": t.h_frac,
            "task.w_frac": t.w_frac,
            "task.class_id": t.class_id,
            "decode.steps": self.decode.steps,
            "decode.temperature": self.decode.temperature,
            "decode.schedule": self.decode.schedule,
            "decode.seed": self.decode.seed,
            "eval.tasks": list(self.eval_tasks),
            "eval.baseline": self.baseline,
        }

    def dumps(self) -> str:
        return io.dumps_kv(self.to_kv())

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> RunConfig:
        known = set(cls().to_kv())
        unknown = set(kv) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = {k: io.format_value(v) for k, v in cls().to_kv().items()}
        merged.update(kv)
        try:
            return _build_config(merged)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def loads(cls, text: str) -> RunConfig:
        try:
            kv = io.loads_kv(text)
        except io.FormatError as exc:
            raise ConfigError(str(exc)) from exc
        return cls.from_kv(kv)

    @classmethod
    def load(cls, path) -> RunConfig:
        return cls.loads(Path(path).read_text())


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _list(s: str, conv=str):
    return tuple(conv(x.strip()) for x in s.split(",") if x.strip())


def _build_config(m: dict[str, str]) -> RunConfig:
    class_id = m["task.class_id"]
    cfg = RunConfig(
        seed=int(m["seed"]),
        n_train=int(m["data.n_train"]),
        n_eval=int(m["data.n_eval"]),
        dims=(int(m["data.t"]), int(m["data.h"]), int(m["data.w"])),
        n_classes=int(m["data.n_classes"]),
        rect=int(m["data.rect"]),
        levels=_list(m["data.levels"], float),
        v_vis=int(m["tokenizer.v_vis"]),
        blocks=(int(m["tokenizer.block_t"]), int(m["tokenizer.block_h"]), int(m["tokenizer.block_w"])),
        max_iter=int(m["tokenizer.max_iter"]),
        predictor=m["predictor.kind"],
        oracle_eps=float(m["predictor.oracle_eps"]),
        train=TrainConfig(
            lr=float(m["predictor.lr"]),
            epochs=int(m["predictor.epochs"]),
            batch_size=int(m["predictor.batch_size"]),
            label_smoothing=float(m["predictor.label_smoothing"]),
            schedule=m["predictor.schedule"],
        ),
        tasks=_list(m["train.tasks"]),
        task=TaskSpec(
            m["task.kind"],
            t=int(m["task.t"]),
            t1=int(m["task.t1"]),
            t2=int(m["task.t2"]),
            h_frac=float(m["task.h_frac"]),
            w_frac=float(m["task.w_frac"]),
            class_id=int(class_id) if class_id else None,
        ),
        decode=DecodeConfig(
            steps=int(m["decode.steps"]),
            temperature=float(m["decode.temperature"]),
            schedule=m["decode.schedule"],
            seed=int(m["decode.seed"]),
        ),
        eval_tasks=_list(m["eval.tasks"]),
        baseline=_bool(m["eval.baseline"]),
    )
    cfg.validate()
    return cfg


# -- experiment ---------------------------------------------------------------


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class TaskMetrics:
    token_accuracy: float
    target_accuracy: float
    psnr: float
    baseline_accuracy: float | None = None


@dataclass
class EvalReport:
    tasks: dict[str, TaskMetrics] = field(default_factory=dict)
    loss_curve: list[LossBreakdown] = field(default_factory=list)
    tokenizer_distortion: list[float] = field(default_factory=list)
    wall_clock: dict[str, float] = field(default_factory=dict)

    HEADER = (
        "maskvid evaluation report\n"
        "metrics: token accuracy and PSNR against held-out synthetic videos;\n"
        "distribution metrics (FVD/IS) are not computed at this scale"
    )

    def to_kv(self) -> dict:
        out: dict = {}
        for kind, m in self.tasks.items():
            out[f"{kind}.token_accuracy"] = m.token_accuracy
            out[f"{kind}.target_accuracy"] = m.target_accuracy
            out[f"{kind}.psnr"] = m.psnr
            if m.baseline_accuracy is not None:
                out[f"{kind}.baseline_token_accuracy"] = m.baseline_accuracy
        if self.loss_curve:
            out["train.steps"] = len(self.loss_curve)
            out["train.loss_first"] = self.loss_curve[0].total
            out["train.loss_last"] = self.loss_curve[-1].total
        if self.tokenizer_distortion:
            out["tokenizer.iterations"] = len(self.tokenizer_distortion)
            out["tokenizer.distortion"] = self.tokenizer_distortion[-1]
        return out

    def dumps(self) -> str:
        """Deterministic report text; wall-clock timings are kept out of it."""
        return io.dumps_kv(self.to_kv(), header=self.HEADER)

    def loss_csv(self) -> str:
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = [f.name for f in fields(LossBreakdown)]
        writer.writerow(["step", *names])
        for i, lb in enumerate(self.loss_curve):
            row = asdict(lb)
            writer.writerow([i, *(io.format_value(row[k]) for k in names)])
        return buf.getvalue()


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


@_stage("data")
def make_datasets(config: RunConfig):
    return gen_synthetic(config.dataset("train")), gen_synthetic(config.dataset("eval"))


@_stage("tokenizer")
def fit_tokenizer(config: RunConfig, videos):
    return fit_codebook(videos, config.shape, config.v_vis, config.max_iter,
                        make_rng(config.seed_for("tokenizer")))


@_stage("train")
def train_predictor(config: RunConfig, videos, labels, codebook: Codebook):
    params = PottsParams.zeros(config.v_vis, config.shape.n, config.n_classes)
    if config.predictor != "potts":
        return params, []
    result = train(params, videos, labels, codebook, config.shape, config.layout, config.tasks,
                   config.train, make_rng(config.seed_for("train")), base_task=config.task)
    return result.params, result.curve


def evaluate_task(kind: str, videos, labels, codebook: Codebook, config: RunConfig, make_predictor) -> tuple:
    """Mean (token accuracy, accuracy on non-condition tokens, PSNR) for one task.

    ``make_predictor(truth_grid)`` returns the predictor to decode with.
    """
    shape, layout = config.shape, config.layout
    ti = TASKS.index(kind)
    accs, tgt_accs, psnrs = [], [], []
    for vi, (video, label) in enumerate(zip(videos, labels)):
        spec = task_instance(kind, int(label), config.task)
        truth = encode(video, codebook, shape)
        bundle = make_condition(video, spec, codebook, shape)
        dcfg = replace(config.decode, seed=derive_seed(config.decode.seed, config.seed, ti, vi))
        cls = layout.class_token(spec.class_id) if spec.uses_class else layout.noclass_id
        grid, _ = commit_decode(make_predictor(truth), layout.task_token(kind), cls, bundle, dcfg, layout)
        accs.append(token_accuracy(grid, truth))
        if (~bundle.allpadded).all():
            tgt_accs.append(float("nan"))
        else:
            tgt_accs.append(token_accuracy(grid, truth, region=bundle.allpadded))
        psnrs.append(psnr(decode(grid, codebook, shape), video))
    nan_mean = float(np.nanmean(tgt_accs)) if not np.all(np.isnan(tgt_accs)) else float("nan")
    return float(np.mean(accs)), nan_mean, float(np.mean(psnrs))


@_stage("evaluate")
def evaluate(config: RunConfig, videos, labels, codebook: Codebook, params: PottsParams) -> dict[str, TaskMetrics]:
    layout = config.layout
    if config.predictor == "oracle":
        def make(truth):
            return OraclePredictor(truth, layout, config.oracle_eps)
    else:
        trained = PottsPredictor(params, layout)

        def make(truth):
            return trained
    untrained = PottsPredictor(PottsParams.zeros(config.v_vis, config.shape.n, config.n_classes), layout)
    out = {}
    for kind in config.eval_tasks:
        acc, tgt, ps = evaluate_task(kind, videos, labels, codebook, config, make)
        base = None
        if config.baseline:
            base = evaluate_task(kind, videos, labels, codebook, config, lambda truth: untrained)[0]
        out[kind] = TaskMetrics(acc, tgt, ps, base)
    return out


def run_experiment(config: RunConfig, out_dir=None) -> EvalReport:
    """Fit tokenizer, train the predictor, decode every evaluation task and report.

    When ``out_dir`` is given, all artifacts are written there.
    """
    config.validate()
    report = EvalReport()
    clock = time.perf_counter()

    (train_v, train_y), (eval_v, eval_y) = make_datasets(config)
    report.wall_clock["data"] = time.perf_counter() - clock

    codebook, fit = fit_tokenizer(config, train_v)
    report.tokenizer_distortion = fit.distortion_per_iter
    report.wall_clock["tokenizer"] = time.perf_counter() - clock

    params, curve = train_predictor(config, train_v, train_y, codebook)
    report.loss_curve = curve
    report.wall_clock["train"] = time.perf_counter() - clock

    if eval_v:
        report.tasks = evaluate(config, eval_v, eval_y, codebook, params)
    report.wall_clock["evaluate"] = time.perf_counter() - clock

    if out_dir is not None:
        save_run(Path(out_dir), config, codebook, params, report)
    return report


@_stage("persist")
def save_run(out: Path, config: RunConfig, codebook: Codebook, params: PottsParams, report: EvalReport) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.kv").write_text(config.dumps())
    io.write_bytes(out / "codebook.mgcb", io.codebook_to_bytes(codebook.centroids))
    io.write_bytes(out / "params.mgpt", io.params_to_bytes(params.A, params.b, params.g, params.h))
    (out / "report.kv").write_text(report.dumps())
    (out / "loss_curve.csv").write_text(report.loss_csv())
    (out / "timing.kv").write_text(io.dumps_kv(report.wall_clock, header="wall-clock seconds since start"))
