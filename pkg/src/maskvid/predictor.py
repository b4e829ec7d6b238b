"""Token predictors p(z_i | [task, class, zbar]) and the decomposed multi-task loss.

Two predictors share one interface, ``predict(task_token, class_token, zbar, shape)``
returning an (N, V_vis) row-stochastic matrix:

* :class:`PottsPredictor` -- a trainable log-linear model with positional,
  task and class biases plus a 6-neighbour compatibility table over the
  corrupted sequence.
* :class:`OraclePredictor` -- puts ``1 - eps`` on known ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .core import TASKS, ConfigError, GridShape, TrainingError, VocabularyError, VocabularyLayout
from .masking import MASKED, RECONS, REFINE, commit_mask, mask_regions, sample_training_mask
from .tasks import TaskSpec, make_condition
from .tokenizer import encode

LABEL_SMOOTHING = 1e-4

_OFFSETS = ((-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1))


@lru_cache(maxsize=32)
def neighbors(shape: GridShape) -> np.ndarray:
    """(N, 6) flat indices of lattice neighbours, -1 where the lattice ends."""
    tl, hl, wl = shape.lattice
    t, h, w = np.meshgrid(np.arange(tl), np.arange(hl), np.arange(wl), indexing="ij")
    t, h, w = t.ravel(), h.ravel(), w.ravel()
    out = np.full((shape.n, len(_OFFSETS)), -1, dtype=np.int64)
    for k, (dt, dh, dw) in enumerate(_OFFSETS):
        tt, hh, ww = t + dt, h + dh, w + dw
        ok = (tt >= 0) & (tt < tl) & (hh >= 0) & (hh < hl) & (ww >= 0) & (ww < wl)
        out[ok, k] = ((tt * hl + hh) * wl + ww)[ok]
    out.flags.writeable = False
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PottsParams:
    """A: (V+1, V) neighbour table, extra row for [MASK]; b: (N, V); g: (10, V); h: (C+1, V)."""

    A: np.ndarray
    b: np.ndarray
    g: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, v_vis: int, n: int, n_classes: int) -> PottsParams:
        return cls(
            np.zeros((v_vis + 1, v_vis)),
            np.zeros((n, v_vis)),
            np.zeros((len(TASKS), v_vis)),
            np.zeros((n_classes + 1, v_vis)),
        )

    @property
    def v_vis(self) -> int:
        return self.A.shape[1]

    def blocks(self) -> dict[str, np.ndarray]:
        return {"A": self.A, "b": self.b, "g": self.g, "h": self.h}

    def copy(self) -> PottsParams:
        return PottsParams(self.A.copy(), self.b.copy(), self.g.copy(), self.h.copy())


def _context_rows(zbar: np.ndarray, layout: VocabularyLayout) -> np.ndarray:
    layout.check_corrupted(zbar)
    return np.where(zbar == layout.mask_id, layout.v_vis, zbar - layout.visual_base)


def potts_logits(params: PottsParams, layout: VocabularyLayout, task_token, class_token, zbar, shape: GridShape):
    zbar = np.asarray(zbar, dtype=np.int64)
    if zbar.size != shape.n or params.b.shape[0] != shape.n:
        raise ConfigError(f"sequence length {zbar.size} / positional table {params.b.shape[0]} != N={shape.n}")
    ctx = _context_rows(zbar, layout)
    nbr = neighbors(shape)
    rows = np.where(nbr >= 0, ctx[np.maximum(nbr, 0)], -1)
    # padded neighbour slots point at an appended zero row
    table = np.vstack([params.A, np.zeros((1, params.v_vis))])
    pair = table[rows].sum(axis=1)
    return (
        params.b
        + params.g[layout.task_row(task_token)]
        + params.h[layout.class_row(class_token)]
        + pair
    )


class PottsPredictor:
    def __init__(self, params: PottsParams, layout: VocabularyLayout):
        if params.v_vis != layout.v_vis:
            raise ConfigError("parameter vocabulary does not match the layout")
        self.params = params
        self.layout = layout

    def predict(self, task_token, class_token, zbar, shape: GridShape) -> np.ndarray:
        return softmax(potts_logits(self.params, self.layout, task_token, class_token, zbar, shape))


class OraclePredictor:
    """Knows the answer: 1 - eps on the true id, eps / (V - 1) spread over the rest."""

    def __init__(self, truth, layout: VocabularyLayout, eps: float = 0.0):
        self.truth = np.asarray(getattr(truth, "ids", truth), dtype=np.int64)
        if self.truth.size and (self.truth.min() < 0 or self.truth.max() >= layout.v_vis):
            raise VocabularyError("oracle truth ids outside the visual vocabulary")
        if not 0.0 <= eps < 1.0:
            raise ConfigError("oracle eps must lie in [0, 1)")
        self.layout = layout
        self.eps = eps

    def predict(self, task_token, class_token, zbar, shape: GridShape) -> np.ndarray:
        self.layout.task_row(task_token)
        self.layout.class_row(class_token)
        self.layout.check_corrupted(zbar)
        v = self.layout.v_vis
        off = self.eps / (v - 1) if v > 1 else 0.0
        probs = np.full((self.truth.size, v), off)
        probs[np.arange(self.truth.size), self.truth] = 1.0 - self.eps if v > 1 else 1.0
        return probs


# -- loss ---------------------------------------------------------------------


@dataclass
class LossBreakdown:
    """Mean cross-entropy (nats) overall and per region, with region sizes."""

    total: float
    refine: float
    mask_part: float
    recons: float
    n_refine: int
    n_mask: int
    n_recons: int

    @property
    def n(self) -> int:
        return self.n_refine + self.n_mask + self.n_recons


def infer_regions(zbar, targets, cond, layout: VocabularyLayout) -> np.ndarray:
    """Recover loss regions from the corrupted sequence alone.

    Precedence is [MASK], then condition token, then target; a position whose
    condition token equals its target is therefore counted as refine.
    """
    zbar = np.asarray(zbar)
    cond_u = layout.to_unified(getattr(cond, "ids", cond))
    tgt_u = layout.to_unified(getattr(targets, "ids", targets))
    regions = np.full(zbar.shape, RECONS, dtype=np.int8)
    regions[zbar == cond_u] = REFINE
    regions[zbar == layout.mask_id] = MASKED
    if np.any((regions == RECONS) & (zbar != tgt_u)):
        raise ValueError("zbar position matches none of [MASK], condition or target")
    return regions


def _smoothed_targets(targets: np.ndarray, v: int, eps: float) -> np.ndarray:
    q = np.full((targets.size, v), eps / v)
    q[np.arange(targets.size), targets] += 1.0 - eps
    return q


def position_ce(probs: np.ndarray, targets, label_smoothing: float = 0.0) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.int64)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    if label_smoothing == 0.0:
        return -logp[np.arange(targets.size), targets]
    q = _smoothed_targets(targets, probs.shape[1], label_smoothing)
    # 0 * log 0 contributes nothing
    return -np.where(q > 0, q * logp, 0.0).sum(axis=1)


def breakdown(ce: np.ndarray, regions: np.ndarray) -> LossBreakdown:
    if ce.size == 0:
        raise ValueError("empty sequence")
    parts, counts = [], []
    for tag in (REFINE, MASKED, RECONS):
        sel = regions == tag
        counts.append(int(sel.sum()))
        parts.append(float(ce[sel].mean()) if sel.any() else 0.0)
    return LossBreakdown(float(ce.mean()), *parts, *counts)


def multitask_loss(probs, targets, zbar=None, cond=None, layout=None, *, regions=None, label_smoothing: float = 0.0):
    """Split the per-position cross-entropy into refine / mask / reconstruct terms.

    Pass ``regions`` directly when known (training does); otherwise they are
    recovered from ``zbar`` against ``cond`` and ``targets``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    tgt = np.asarray(getattr(targets, "ids", targets), dtype=np.int64)
    if tgt.size == 0:
        raise ValueError("empty sequence")
    if regions is None:
        regions = infer_regions(zbar, tgt, cond, layout)
    return breakdown(position_ce(probs, tgt, label_smoothing), np.asarray(regions))


# -- gradients and training ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class Example:
    task_token: int
    class_token: int
    zbar: np.ndarray
    target: np.ndarray
    regions: np.ndarray


def loss_and_grad(params: PottsParams, batch, layout: VocabularyLayout, shape: GridShape, label_smoothing: float = 0.0):
    """Mean cross-entropy over all positions of the batch and its gradient.

    d(mean CE)/d logits = (softmax - smoothed one-hot) / (B * N); each logit
    term then routes that back to its own parameter row.
    """
    grads = PottsParams.zeros(params.v_vis, shape.n, params.h.shape[0] - 1)
    nbr = neighbors(shape)
    scale = 1.0 / (len(batch) * shape.n)
    ces, regs = [], []
    for ex in batch:
        logits = potts_logits(params, layout, ex.task_token, ex.class_token, ex.zbar, shape)
        probs = softmax(logits)
        target = np.asarray(ex.target, dtype=np.int64)
        ces.append(position_ce(probs, target, label_smoothing))
        regs.append(np.asarray(ex.regions))
        d = (probs - _smoothed_targets(target, params.v_vis, label_smoothing)) * scale
        grads.b += d
        total = d.sum(axis=0)
        grads.g[layout.task_row(ex.task_token)] += total
        grads.h[layout.class_row(ex.class_token)] += total
        ctx = _context_rows(np.asarray(ex.zbar), layout)
        for k in range(nbr.shape[1]):
            ok = nbr[:, k] >= 0
            np.add.at(grads.A, ctx[nbr[ok, k]], d[ok])
    loss = breakdown(np.concatenate(ces), np.concatenate(regs))
    return loss, grads


def grad_step(params: PottsParams, batch, learning_rate: float, layout: VocabularyLayout, shape: GridShape, label_smoothing: float = 0.0):
    """One SGD step; returns ``(new_params, loss_before_step)``."""
    if not learning_rate >= 0.0:
        raise ConfigError("learning rate must be non-negative")
    if not batch:
        raise ConfigError("empty batch")
    loss, grads = loss_and_grad(params, batch, layout, shape, label_smoothing)
    new = params.copy()
    for name, grad in grads.blocks().items():
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite gradient in block {name}")
        getattr(new, name)[...] -= learning_rate * grad
    return new, loss


@dataclass
class TrainConfig:
    lr: float = 1.0
    epochs: int = 4
    batch_size: int = 8
    label_smoothing: float = LABEL_SMOOTHING
    schedule: str = "cosine"


@dataclass
class TrainResult:
    params: PottsParams
    curve: list[LossBreakdown] = field(default_factory=list)


def task_instance(kind: str, label: int | None, base: TaskSpec | None = None) -> TaskSpec:
    """Concrete TaskSpec for ``kind``; class tasks take the video's own label."""
    base = base or TaskSpec("FP")
    return replace(base, kind=kind, class_id=label if kind in ("CG", "CFP") else None)


def train(params: PottsParams, videos, labels, codebook, shape: GridShape, layout: VocabularyLayout,
          tasks, config: TrainConfig, rng: np.random.Generator, base_task: TaskSpec | None = None) -> TrainResult:
    """SGD over random (video, task, mask) draws.

    Each example: pick a video and a task uniformly, build its condition
    bundle, draw a training mask, corrupt the ground-truth tokens and take
    the cross-entropy against them.
    """
    videos = list(videos)
    if not videos:
        raise ConfigError("training dataset is empty")
    tasks = list(tasks)
    if not tasks:
        raise ConfigError("no training tasks configured")
    truths = [encode(v, codebook, shape).ids for v in videos]
    bundles: dict[tuple[int, str], object] = {}

    def bundle(i: int, kind: str):
        key = (i, kind)
        if key not in bundles:
            spec = task_instance(kind, int(labels[i]), base_task)
            bundles[key] = make_condition(videos[i], spec, codebook, shape)
        return bundles[key]

    steps_per_epoch = max(1, math.ceil(len(videos) / config.batch_size))
    result = TrainResult(params.copy())
    for _ in range(config.epochs * steps_per_epoch):
        batch = []
        for _ in range(config.batch_size):
            i = int(rng.integers(len(videos)))
            kind = tasks[int(rng.integers(len(tasks)))]
            cb = bundle(i, kind)
            mask = sample_training_mask(shape.n, config.schedule, rng)
            zbar = commit_mask(truths[i], cb.cond_tokens, cb.allpadded, mask.scores, mask.cutoff, layout)
            cls = layout.class_token(int(labels[i])) if kind in ("CG", "CFP") else layout.noclass_id
            batch.append(Example(layout.task_token(kind), cls, zbar, truths[i],
                                 mask_regions(cb.allpadded, mask.scores, mask.cutoff)))
        result.params, loss = grad_step(result.params, batch, config.lr, layout, shape, config.label_smoothing)
        result.curve.append(loss)
    return result
