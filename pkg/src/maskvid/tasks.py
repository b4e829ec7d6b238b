"""The ten conditional generation tasks: interior condition regions and padding.

Given a video of shape T x H x W:

====  ==========================================  ===================
task  valid (condition) voxels                    padding
====  ==========================================  ===================
FP    first ``t`` frames                          replicate frame t-1
FI    first ``t1`` and last ``t2`` frames         linear interpolation
OPC   centered h x w rectangle                    edge
OPV   centered vertical strip of width w          edge
OPH   centered horizontal strip of height h       edge
OPD   vertical strip of width w moving right      zeros
IPC   all but the centered h x w rectangle        zeros
IPD   all but a moving h x w rectangle            zeros
CG    nothing (class prefix only)                 zeros
CFP   first ``t`` frames, plus class prefix       replicate frame t-1
====  ==========================================  ===================
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TASKS, ConfigError, DimensionError, GridShape, TokenGrid, VideoTensor
from .tokenizer import Codebook, encode_condition

CLASS_TASKS = ("CG", "CFP")


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    t: int = 1
    t1: int = 1
    t2: int = 1
    h_frac: float = 0.5
    w_frac: float = 0.5
    class_id: int | None = None

    def __post_init__(self):
        if self.kind not in TASKS:
            raise ConfigError(f"unknown task {self.kind!r}; expected one of {TASKS}")
        if self.kind in CLASS_TASKS and self.class_id is None:
            raise ConfigError(f"task {self.kind} requires a class_id")
        if self.t < 1 or self.t1 < 1 or self.t2 < 1:
            raise ConfigError("frame counts t, t1, t2 must be >= 1")
        if not (0.0 < self.h_frac < 1.0 and 0.0 < self.w_frac < 1.0):
            raise ConfigError("h_frac and w_frac must lie strictly inside (0, 1)")

    @property
    def uses_class(self) -> bool:
        return self.kind in CLASS_TASKS


@dataclass(frozen=True, eq=False)
class ConditionBundle:
    padded_video: VideoTensor
    validity: np.ndarray
    cond_tokens: TokenGrid
    allpadded: np.ndarray


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def extents(spec: TaskSpec, height: int, width: int) -> tuple[int, int]:
    """Pixel height and width of the task's rectangle or strip."""
    return _round_half_up(spec.h_frac * height), _round_half_up(spec.w_frac * width)


def moving_left_edge(tau: int, n_frames: int, width: int, w: int) -> int:
    """Left edge of the OPD/IPD window at frame ``tau``; 0 at the first frame, W-w at the last."""
    return _round_half_up((width - w) * tau / (n_frames - 1))


def condition_region(spec: TaskSpec, dims) -> np.ndarray:
    """Boolean (T, H, W) mask of valid condition voxels."""
    T, H, W = (int(d) for d in dims)
    kind = spec.kind
    region = np.zeros((T, H, W), dtype=bool)
    h, w = extents(spec, H, W)
    y0, x0 = (H - h) // 2, (W - w) // 2

    if kind in ("FP", "CFP"):
        if spec.t >= T:
            raise ConfigError(f"t={spec.t} must be smaller than T={T}")
        region[: spec.t] = True
    elif kind == "FI":
        if spec.t1 + spec.t2 >= T:
            raise ConfigError(f"t1 + t2 = {spec.t1 + spec.t2} must be smaller than T={T}")
        region[: spec.t1] = True
        region[T - spec.t2:] = True
    elif kind in ("OPC", "IPC"):
        region[:, y0:y0 + h, x0:x0 + w] = True
        if kind == "IPC":
            region = ~region
    elif kind == "OPV":
        region[:, :, x0:x0 + w] = True
    elif kind == "OPH":
        region[:, y0:y0 + h, :] = True
    elif kind in ("OPD", "IPD"):
        if T < 2:
            raise ConfigError(f"{kind} needs at least 2 frames")
        for tau in range(T):
            x = moving_left_edge(tau, T, W, w)
            if kind == "OPD":
                region[tau, :, x:x + w] = True
            else:
                region[tau, y0:y0 + h, x:x + w] = True
        if kind == "IPD":
            region = ~region
    # CG: no interior condition

    if kind != "CG":
        if not region.any():
            raise ConfigError(f"{kind} condition region is empty for dims {dims}")
        if region.all():
            raise ConfigError(f"{kind} condition region covers the whole video for dims {dims}")
    return region


def _bounding_rect(mask2d: np.ndarray):
    ys = np.flatnonzero(mask2d.any(axis=1))
    xs = np.flatnonzero(mask2d.any(axis=0))
    y0, y1, x0, x1 = ys[0], ys[-1] + 1, xs[0], xs[-1] + 1
    if not mask2d[y0:y1, x0:x1].all() or mask2d.sum() != (y1 - y0) * (x1 - x0):
        raise ConfigError("edge padding requires a rectangular valid region in every frame")
    return y0, y1, x0, x1


def edge_pad_frame(frame: np.ndarray, mask2d: np.ndarray) -> np.ndarray:
    """Fill every pixel from the nearest valid pixel of a rectangular valid region.

    For an axis-aligned rectangle the Chebyshev-then-Euclidean nearest valid
    pixel is unique and equals the coordinate-wise clamp into the rectangle.
    """
    y0, y1, x0, x1 = _bounding_rect(mask2d)
    ys = np.clip(np.arange(frame.shape[0]), y0, y1 - 1)
    xs = np.clip(np.arange(frame.shape[1]), x0, x1 - 1)
    return frame[np.ix_(ys, xs)]


def pad_condition(video: VideoTensor, spec: TaskSpec, region: np.ndarray) -> VideoTensor:
    region = np.asarray(region, dtype=bool)
    if region.shape != tuple(video.dims):
        raise DimensionError(f"region shape {region.shape} != video dims {tuple(video.dims)}")
    T = video.t_frames
    src = video.data
    kind = spec.kind

    if kind in ("FP", "CFP"):
        if not (region[: spec.t].all() and not region[spec.t:].any()):
            raise ConfigError(f"region does not match {kind} with t={spec.t}")
        out = src.copy()
        out[spec.t:] = src[spec.t - 1]
    elif kind == "FI":
        a, b = spec.t1 - 1, T - spec.t2
        if not (region[: a + 1].all() and region[b:].all() and not region[a + 1:b].any()):
            raise ConfigError(f"region does not match FI with t1={spec.t1}, t2={spec.t2}")
        out = src.copy()
        for tau in range(a + 1, b):
            wt = (tau - a) / (b - a)
            out[tau] = (1.0 - wt) * src[a] + wt * src[b]
    elif kind in ("OPC", "OPV", "OPH"):
        out = np.empty_like(src)
        for tau in range(T):
            out[tau] = edge_pad_frame(src[tau], region[tau])
    else:
        out = np.where(region[..., None], src, 0.0)
    # valid voxels are copied bit-exactly whatever the padding did
    out = np.where(region[..., None], src, np.clip(out, 0.0, 1.0))
    return VideoTensor(out)


def make_condition(video: VideoTensor | None, spec: TaskSpec, codebook: Codebook, shape: GridShape) -> ConditionBundle:
    """Region, padding and condition tokens for one task.

    ``video`` may be None only for CG, whose condition is entirely padding.
    """
    if video is None:
        if spec.kind != "CG":
            raise ConfigError(f"task {spec.kind} needs an input video")
        channels = codebook.dim // shape.block_volume
        video = VideoTensor(np.zeros((*shape.video_dims, channels)))
    region = condition_region(spec, video.dims)
    padded = pad_condition(video, spec, region)
    tokens, allpadded = encode_condition(padded, region, codebook, shape)
    return ConditionBundle(padded, region, tokens, allpadded)
