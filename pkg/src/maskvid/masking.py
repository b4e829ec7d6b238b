"""Mask schedules, order-statistic cutoffs, and the interior-token conditional mask."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, VocabularyLayout, ceil_count

SCHEDULES = ("cosine", "uniform", "exponential")

# region tags for the three loss terms
REFINE, MASKED, RECONS = 0, 1, 2

_EXP_RATE = 5.0


def gamma(schedule: str, r: float) -> float:
    """Fraction of tokens still masked at progress ``r``; 1 at r=0 and exactly 0 at r=1."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"ratio {r} outside [0, 1]")
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown schedule {schedule!r}")
    if r == 0.0:
        return 1.0
    if r == 1.0:
        return 0.0
    if schedule == "cosine":
        return math.cos(math.pi * r / 2.0)
    if schedule == "uniform":
        return 1.0 - r
    floor = math.exp(-_EXP_RATE)
    return (math.exp(-_EXP_RATE * r) - floor) / (1.0 - floor)


@dataclass(frozen=True)
class Cutoff:
    """Threshold ``(value, index)``; position i is at-or-below it when
    ``(scores[i], i) <= (value, index)`` lexicographically.

    Carrying the index makes "the k-th smallest" select exactly k positions
    even when scores repeat.
    """

    value: float
    index: int

    def selects(self, scores) -> np.ndarray:
        scores = np.asarray(scores, dtype=np.float64)
        pos = np.arange(scores.size)
        return (scores < self.value) | ((scores == self.value) & (pos <= self.index))


NOTHING = Cutoff(-math.inf, -1)
EVERYTHING = Cutoff(math.inf, np.iinfo(np.int64).max)


def cutoff_kth_smallest(scores, k: int) -> Cutoff:
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    if k == 0:
        return NOTHING
    order = np.lexsort((np.arange(n), scores))
    i = int(order[k - 1])
    return Cutoff(float(scores[i]), i)


def _check_lengths(*arrays):
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise DimensionError("all per-position arrays must have length N")


def commit_mask(current, cond, allpadded, scores, cutoff: Cutoff, layout: VocabularyLayout) -> np.ndarray:
    """Corrupt ``current`` visual ids into the unified-id sequence zbar.

    At-or-below-cutoff positions take the condition token, or [MASK] when the
    supervoxel holds only padding; the rest keep their current token.
    """
    current = np.asarray(current, dtype=np.int64)
    cond = np.asarray(getattr(cond, "ids", cond), dtype=np.int64)
    allpadded = np.asarray(allpadded, dtype=bool)
    _check_lengths(current, cond, allpadded, np.asarray(scores))
    hit = cutoff.selects(scores)
    out = np.where(hit, np.where(allpadded, layout.mask_id, layout.to_unified(cond)), layout.to_unified(current))
    return out.astype(np.int64)


def mask_regions(allpadded, scores, cutoff: Cutoff) -> np.ndarray:
    """Loss region of each position as produced by :func:`commit_mask`."""
    hit = cutoff.selects(scores)
    allpadded = np.asarray(allpadded, dtype=bool)
    return np.where(hit, np.where(allpadded, MASKED, REFINE), RECONS).astype(np.int8)


@dataclass(frozen=True, eq=False)
class TrainingMask:
    scores: np.ndarray
    cutoff: Cutoff
    masked_count: int
    ratio: float


def sample_training_mask(n: int, schedule: str, rng: np.random.Generator) -> TrainingMask:
    """Draw r ~ U[0, 1), then corrupt exactly ceil(gamma(r) * n) positions at random."""
    if n < 1:
        raise ValueError("n must be >= 1")
    r = float(rng.random())
    k = ceil_count(gamma(schedule, r), n)
    scores = rng.random(n)
    return TrainingMask(scores, cutoff_kth_smallest(scores, k), k, r)
