"""Shared domain types: videos, token grids, the unified id space and lattice geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TASKS = ("FP", "FI", "OPC", "OPV", "OPH", "OPD", "IPC", "IPD", "CG", "CFP")


class ConfigError(ValueError):
    """Invalid configuration or precondition on user-supplied parameters."""


class DimensionError(ValueError):
    """Array or video dimensions do not agree."""


class VocabularyError(ValueError):
    """Token id outside its vocabulary range."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class ContractError(RuntimeError):
    """A component broke its behavioral contract (e.g. non-stochastic rows)."""


class TrainingError(RuntimeError):
    """Training aborted, e.g. on a non-finite gradient."""


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """PCG64 generator; identical seeds give identical streams on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn(seed: int | np.random.SeedSequence, n: int) -> list[np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [make_rng(child) for child in ss.spawn(n)]


def derive_seed(*entropy: int) -> int:
    """Collapse a tuple of integers into a single 64-bit seed."""
    return int(np.random.SeedSequence(list(entropy)).generate_state(1, dtype=np.uint64)[0])


_U53 = float(2**53)


def gumbel(rng: np.random.Generator, size: int | None = None):
    """Standard Gumbel draws ``-log(-log(u))``.

    ``u`` lives on the grid ``(k + 1/2) / 2**53`` so it can never hit 0 or 1.
    """
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    u = (k + 0.5) / _U53
    return -np.log(-np.log(u))


@dataclass(frozen=True, eq=False)
class VideoTensor:
    """Dense pixel video of shape (T, H, W, C) with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[..., None]
        if arr.ndim != 4:
            raise DimensionError(f"video must be (T, H, W[, C]); got shape {arr.shape}")
        if arr.size == 0:
            raise DimensionError("video has no voxels")
        if not np.all(np.isfinite(arr)):
            raise NumericError("video contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("video values must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def t_frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape[:3]

    def __eq__(self, other):
        if not isinstance(other, VideoTensor):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True)
class GridShape:
    """Latent lattice dimensions plus the pixel extent of one supervoxel."""

    t_lat: int
    h_lat: int
    w_lat: int
    block_t: int = 1
    block_h: int = 1
    block_w: int = 1

    def __post_init__(self):
        for name in ("t_lat", "h_lat", "w_lat", "block_t", "block_h", "block_w"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")

    @classmethod
    def for_video(cls, dims, blocks) -> GridShape:
        t, h, w = (int(d) for d in dims)
        bt, bh, bw = (int(b) for b in blocks)
        if bt < 1 or bh < 1 or bw < 1:
            raise ConfigError(f"block sizes must be positive, got {blocks}")
        if t % bt or h % bh or w % bw:
            raise DimensionError(f"video dims {dims} not divisible by blocks {blocks}")
        return cls(t // bt, h // bh, w // bw, bt, bh, bw)

    @property
    def n(self) -> int:
        return self.t_lat * self.h_lat * self.w_lat

    @property
    def lattice(self) -> tuple[int, int, int]:
        return (self.t_lat, self.h_lat, self.w_lat)

    @property
    def blocks(self) -> tuple[int, int, int]:
        return (self.block_t, self.block_h, self.block_w)

    @property
    def video_dims(self) -> tuple[int, int, int]:
        return (self.t_lat * self.block_t, self.h_lat * self.block_h, self.w_lat * self.block_w)

    @property
    def block_volume(self) -> int:
        return self.block_t * self.block_h * self.block_w


def flatten_index(coord, shape: GridShape) -> int:
    """Raster position of a lattice coordinate, t-major then h then w."""
    t, h, w = coord
    if not (0 <= t < shape.t_lat and 0 <= h < shape.h_lat and 0 <= w < shape.w_lat):
        raise IndexError(f"coordinate {coord} outside lattice {shape.lattice}")
    return (t * shape.h_lat + h) * shape.w_lat + w


def unflatten_index(idx: int, shape: GridShape) -> tuple[int, int, int]:
    if not 0 <= idx < shape.n:
        raise IndexError(f"position {idx} outside [0, {shape.n})")
    rest, w = divmod(idx, shape.w_lat)
    t, h = divmod(rest, shape.h_lat)
    return (t, h, w)


def supervoxel_of(idx: int, shape: GridShape):
    """Half-open pixel box ``((t0, t1), (y0, y1), (x0, x1))`` covered by token ``idx``."""
    t, h, w = unflatten_index(idx, shape)
    bt, bh, bw = shape.blocks
    return ((t * bt, (t + 1) * bt), (h * bh, (h + 1) * bh), (w * bw, (w + 1) * bw))


@dataclass(frozen=True, eq=False)
class TokenGrid:
    """Visual token ids in raster order over a latent lattice."""

    shape: GridShape
    ids: np.ndarray
    v_vis: int

    def __post_init__(self):
        ids = np.array(self.ids, dtype=np.int64).reshape(-1)
        if ids.size != self.shape.n:
            raise DimensionError(f"expected {self.shape.n} ids, got {ids.size}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.v_vis):
            raise VocabularyError(f"token ids must lie in [0, {self.v_vis})")
        ids.flags.writeable = False
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_lattice(cls, arr, shape: GridShape, v_vis: int) -> TokenGrid:
        arr = np.asarray(arr)
        if tuple(arr.shape) != shape.lattice:
            raise DimensionError(f"lattice shape {arr.shape} != {shape.lattice}")
        return cls(shape, arr.reshape(-1), v_vis)

    def lattice(self) -> np.ndarray:
        return self.ids.reshape(self.shape.lattice)

    def __eq__(self, other):
        if not isinstance(other, TokenGrid):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.v_vis == other.v_vis
            and bool(np.array_equal(self.ids, other.ids))
        )

    __hash__ = None


@dataclass(frozen=True)
class VocabularyLayout:
    """Unified id space: mask, no-class, ten task prompts, classes, then visual tokens."""

    n_classes: int
    v_vis: int

    mask_id = 0
    noclass_id = 1
    task_base = 2
    class_base = 12

    def __post_init__(self):
        if self.n_classes < 0 or self.v_vis < 1:
            raise ConfigError("n_classes must be >= 0 and v_vis >= 1")

    @property
    def visual_base(self) -> int:
        return self.class_base + self.n_classes

    @property
    def size(self) -> int:
        return self.visual_base + self.v_vis

    def task_token(self, kind: str) -> int:
        try:
            return self.task_base + TASKS.index(kind)
        except ValueError:
            raise ConfigError(f"unknown task {kind!r}; expected one of {TASKS}") from None

    def class_token(self, class_id: int | None) -> int:
        if class_id is None:
            return self.noclass_id
        if not 0 <= class_id < self.n_classes:
            raise VocabularyError(f"class {class_id} outside [0, {self.n_classes})")
        return self.class_base + int(class_id)

    def task_row(self, token: int) -> int:
        row = int(token) - self.task_base
        if not 0 <= row < len(TASKS):
            raise VocabularyError(f"id {token} is not a task prompt")
        return row

    def class_row(self, token: int) -> int:
        """Row of the class bias table; the no-class token maps to the last row."""
        if token == self.noclass_id:
            return self.n_classes
        row = int(token) - self.class_base
        if not 0 <= row < self.n_classes:
            raise VocabularyError(f"id {token} is not a class token")
        return row

    def to_unified(self, visual_ids) -> np.ndarray:
        return np.asarray(visual_ids, dtype=np.int64) + self.visual_base

    def sequence(self, task_token: int, class_token: int, zbar) -> np.ndarray:
        """Full model input ``[task, class, zbar...]`` of length 2 + N."""
        return np.concatenate([[task_token, class_token], np.asarray(zbar, dtype=np.int64)])

    def check_corrupted(self, zbar) -> None:
        zbar = np.asarray(zbar)
        bad = (zbar != self.mask_id) & ((zbar < self.visual_base) | (zbar >= self.size))
        if np.any(bad):
            raise VocabularyError("corrupted sequence holds ids that are neither visual nor [MASK]")


def ceil_count(fraction: float, n: int) -> int:
    return int(math.ceil(fraction * n))
