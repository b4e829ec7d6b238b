"""Non-autoregressive conditional decoding with interior condition tokens."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, ContractError, NumericError, TokenGrid, VocabularyLayout, ceil_count, gumbel, spawn
from .masking import EVERYTHING, SCHEDULES, Cutoff, commit_mask, cutoff_kth_smallest, gamma
from .tasks import ConditionBundle, TaskSpec, make_condition
from .tokenizer import Codebook, decode

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class DecodeConfig:
    steps: int = 12
    temperature: float = 4.5
    schedule: str = "cosine"
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not self.temperature >= 0.0:
            raise ConfigError("temperature must be >= 0")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}")


PRESETS = {
    "default": DecodeConfig(12, 4.5, "cosine"),
    "bair": DecodeConfig(12, 400.0, "exponential"),
    "k600": DecodeConfig(12, 7.5, "uniform"),
}


@dataclass(frozen=True, eq=False)
class StepSnapshot:
    zbar: np.ndarray
    zhat: np.ndarray
    scores: np.ndarray
    cutoff: Cutoff
    n_finalized: int
    sampled: np.ndarray


@dataclass
class DecodeTrace:
    steps: list[StepSnapshot] = field(default_factory=list)

    @property
    def n_finalized(self) -> list[int]:
        return [s.n_finalized for s in self.steps]


def check_stochastic(probs: np.ndarray, n: int, v: int) -> None:
    if probs.shape != (n, v):
        raise ContractError(f"predictor returned shape {probs.shape}, expected {(n, v)}")
    if not np.all(np.isfinite(probs)) or probs.min() < 0.0:
        raise ContractError("predictor returned negative or non-finite probabilities")
    if np.max(np.abs(probs.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
        raise ContractError("predictor rows do not sum to 1")


def sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row by inverse CDF; one uniform per row, in row order."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    draws = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(draws, probs.shape[1] - 1)


def commit_decode(predictor, task_token: int, class_token: int, bundle: ConditionBundle,
                  config: DecodeConfig, layout: VocabularyLayout):
    """Generate all N visual tokens in ``config.steps`` parallel steps.

    Step t corrupts the current estimate with the condition tokens, resamples
    every still-active position, scores each by the probability of its sample,
    perturbs unfrozen scores with annealed Gumbel noise and freezes all but the
    ceil(gamma((t+1)/K) * N) lowest-scoring positions.

    Frozen positions keep score 1 but are ranked after every active one, so
    Gumbel-perturbed active scores above 1 cannot push them back into the
    sampled set.
    """
    shape = bundle.cond_tokens.shape
    n, v = shape.n, layout.v_vis
    k_steps, temp = config.steps, config.temperature
    sample_rng, noise_rng = spawn(config.seed, 2)

    scores = np.zeros(n)
    frozen = np.zeros(n, dtype=bool)
    cutoff = EVERYTHING
    zhat = np.zeros(n, dtype=np.int64)
    trace = DecodeTrace()

    for t in range(k_steps):
        ranked = np.where(frozen, math.inf, scores)
        active = cutoff.selects(ranked)
        zbar = commit_mask(zhat, bundle.cond_tokens, bundle.allpadded, ranked, cutoff, layout)
        probs = predictor.predict(task_token, class_token, zbar, shape)
        check_stochastic(probs, n, v)

        idx = np.flatnonzero(active)
        draws = sample_rows(probs[idx], sample_rng)
        zhat[idx] = draws
        scores[idx] = probs[idx, draws]

        coef = temp * (1.0 - (t + 1) / k_steps)
        noisy = np.flatnonzero(scores < 1.0)
        if coef != 0.0 and noisy.size:
            scores[noisy] += coef * gumbel(noise_rng, noisy.size)
        if not np.all(np.isfinite(scores)):
            raise NumericError(f"non-finite confidence score at step {t}")

        k = ceil_count(gamma(config.schedule, (t + 1) / k_steps), n)
        ranked = np.where(frozen, math.inf, scores)
        cutoff = cutoff_kth_smallest(ranked, k)
        frozen = ~cutoff.selects(ranked)
        scores[frozen] = 1.0
        trace.steps.append(StepSnapshot(zbar, zhat.copy(), scores.copy(), cutoff, int(frozen.sum()), active))

    return TokenGrid(shape, zhat, v), trace


def generate(video, spec: TaskSpec, codebook: Codebook, shape, predictor, config: DecodeConfig,
             layout: VocabularyLayout, return_tokens: bool = False):
    """Condition, decode tokens, and map them back to pixels.

    ``video`` may be None for class-conditional generation (CG).
    """
    bundle = make_condition(video, spec, codebook, shape)
    cls = layout.class_token(spec.class_id) if spec.uses_class else layout.noclass_id
    grid, trace = commit_decode(predictor, layout.task_token(spec.kind), cls, bundle, config, layout)
    out = decode(grid, codebook, shape)
    if return_tokens:
        return out, grid, trace
    return out
