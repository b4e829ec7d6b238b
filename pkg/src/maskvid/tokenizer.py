"""Block vector quantizer: a k-means codebook over flattened supervoxel pixels.

Each token depends only on its own supervoxel, so condition tokens never carry
information from outside the condition region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConfigError,
    DimensionError,
    GridShape,
    TokenGrid,
    VideoTensor,
    VocabularyError,
)

# upper bound on the (chunk, k, dim) temporary used for distance evaluation
_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True, eq=False)
class Codebook:
    centroids: np.ndarray

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise DimensionError(f"centroids must be (V, dim), got {c.shape}")
        if not np.all(np.isfinite(c)) or c.min() < 0.0 or c.max() > 1.0:
            raise ValueError("centroid entries must be finite and within [0, 1]")
        c.flags.writeable = False
        object.__setattr__(self, "centroids", c)

    @property
    def v_vis(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass
class FitReport:
    iterations: int = 0
    distortion_per_iter: list[float] = field(default_factory=list)


def _check_dims(video: VideoTensor, shape: GridShape) -> None:
    if tuple(video.dims) != shape.video_dims:
        raise DimensionError(
            f"video dims {tuple(video.dims)} do not match grid {shape.lattice} x blocks {shape.blocks}"
        )


def extract_blocks(video: VideoTensor, shape: GridShape) -> np.ndarray:
    """(N, block_volume * C) matrix of supervoxel vectors in raster order."""
    _check_dims(video, shape)
    tl, hl, wl = shape.lattice
    bt, bh, bw = shape.blocks
    c = video.channels
    x = video.data.reshape(tl, bt, hl, bh, wl, bw, c).transpose(0, 2, 4, 1, 3, 5, 6)
    return x.reshape(shape.n, bt * bh * bw * c)


def assemble_blocks(vectors: np.ndarray, shape: GridShape) -> np.ndarray:
    """Inverse of :func:`extract_blocks`; returns a raw (T, H, W, C) array."""
    tl, hl, wl = shape.lattice
    bt, bh, bw = shape.blocks
    c = vectors.shape[1] // shape.block_volume
    x = vectors.reshape(tl, hl, wl, bt, bh, bw, c).transpose(0, 3, 1, 4, 2, 5, 6)
    return x.reshape(tl * bt, hl * bh, wl * bw, c)


def nearest(points: np.ndarray, centroids: np.ndarray):
    """Nearest centroid per point by exact squared L2; ties go to the lowest id.

    Distances are computed as explicit coordinate differences (not the
    ``|x|^2 - 2x.c + |c|^2`` expansion) so that equidistant points tie exactly.
    """
    m = points.shape[0]
    k, d = centroids.shape
    ids = np.empty(m, dtype=np.int64)
    dist = np.empty(m, dtype=np.float64)
    step = max(1, _CHUNK_ELEMS // max(1, k * d))
    for lo in range(0, m, step):
        diff = points[lo:lo + step, None, :] - centroids[None, :, :]
        sq = np.einsum("ikd,ikd->ik", diff, diff)
        j = np.argmin(sq, axis=1)
        ids[lo:lo + step] = j
        dist[lo:lo + step] = sq[np.arange(j.size), j]
    return ids, dist


def _farthest_point_init(points: np.ndarray, first: int, k: int) -> np.ndarray:
    chosen = [first]
    d = ((points - points[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _cluster_means(points, weights, ids, k, centroids):
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    mass = np.bincount(ids, weights=weights, minlength=k)
    out = centroids.copy()
    nonempty = np.flatnonzero(mass)
    starts = np.searchsorted(sorted_ids, nonempty)
    sums = np.add.reduceat(points[order] * weights[order, None], starts, axis=0)
    out[nonempty] = sums / mass[nonempty, None]
    # a cluster of one distinct vector is that vector, bit-exactly
    members = np.bincount(ids, minlength=k)
    single = np.flatnonzero(members == 1)
    out[single] = points[order[starts[np.searchsorted(nonempty, single)]]]
    return out, mass


def _reseed(points, ids, centroids, targets):
    """Move each target centroid onto the point currently farthest from its own centroid."""
    dist = ((points - centroids[ids]) ** 2).sum(axis=1)
    for j in targets:
        far = int(np.argmax(dist))
        centroids[j] = points[far]
        ids[far] = j
        dist[far] = 0.0


def lloyd(points: np.ndarray, k: int, max_iter: int, rng: np.random.Generator):
    """Lloyd's k-means with farthest-point initialization.

    Returns ``(centroids, FitReport)``. The report records the mean squared
    distortion of every assignment step; it is non-increasing. Repeated
    vectors are collapsed and carried as weights.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DimensionError("points must be a 2-D array")
    if max_iter < 1:
        raise ConfigError("max_iter must be >= 1")
    if points.shape[0] == 0:
        raise ConfigError(f"need at least {k} distinct vectors, found 0")
    uniq, inverse, counts = np.unique(points, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if uniq.shape[0] < k:
        raise ConfigError(f"need at least {k} distinct vectors, found {uniq.shape[0]}")
    weights = counts.astype(np.float64)
    total = weights.sum()

    centroids = _farthest_point_init(uniq, int(inverse[rng.integers(points.shape[0])]), k)
    report = FitReport()
    prev = None
    for _ in range(max_iter):
        ids, dist = nearest(uniq, centroids)
        report.iterations += 1
        report.distortion_per_iter.append(float(np.dot(weights, dist) / total))
        if prev is not None and np.array_equal(ids, prev):
            break
        prev = ids
        centroids, mass = _cluster_means(uniq, weights, ids, k, centroids)
        empty = np.flatnonzero(mass == 0)
        if empty.size:
            _reseed(uniq, ids.copy(), centroids, empty)

    # duplicates can only survive when the loop stopped on max_iter right after an update
    _, first = np.unique(centroids, axis=0, return_index=True)
    dupes = np.setdiff1d(np.arange(k), first)
    if dupes.size:
        ids, _ = nearest(uniq, centroids)
        _reseed(uniq, ids, centroids, dupes)
    return centroids, report


def fit_codebook(videos, shape: GridShape, v_vis: int, max_iter: int, rng: np.random.Generator):
    """Fit a ``v_vis``-entry codebook to the supervoxels of ``videos``."""
    videos = list(videos)
    if not videos:
        raise ConfigError("cannot fit a codebook on an empty dataset")
    points = np.concatenate([extract_blocks(v, shape) for v in videos], axis=0)
    centroids, report = lloyd(points, v_vis, max_iter, rng)
    return Codebook(np.clip(centroids, 0.0, 1.0)), report


def _check_codebook(codebook: Codebook, video: VideoTensor, shape: GridShape) -> None:
    if codebook.dim != shape.block_volume * video.channels:
        raise DimensionError(
            f"codebook dim {codebook.dim} != block volume {shape.block_volume} x {video.channels} channels"
        )


def encode(video: VideoTensor, codebook: Codebook, shape: GridShape) -> TokenGrid:
    _check_codebook(codebook, video, shape)
    ids, _ = nearest(extract_blocks(video, shape), codebook.centroids)
    return TokenGrid(shape, ids, codebook.v_vis)


def decode(grid: TokenGrid, codebook: Codebook, shape: GridShape | None = None) -> VideoTensor:
    shape = shape or grid.shape
    if grid.shape.lattice != shape.lattice:
        raise DimensionError("token grid does not match target shape")
    if codebook.dim % shape.block_volume:
        raise DimensionError("codebook dim is not a multiple of the block volume")
    if grid.ids.size and grid.ids.max() >= codebook.v_vis:
        raise VocabularyError(f"token id {int(grid.ids.max())} outside codebook of {codebook.v_vis}")
    return VideoTensor(assemble_blocks(codebook.centroids[grid.ids], shape))


def encode_condition(video: VideoTensor, validity: np.ndarray, codebook: Codebook, shape: GridShape):
    """Tokens of the padded video, plus which supervoxels hold no valid voxel at all."""
    validity = np.asarray(validity, dtype=bool)
    if validity.shape != tuple(video.dims):
        raise DimensionError(f"validity shape {validity.shape} != video dims {tuple(video.dims)}")
    grid = encode(video, codebook, shape)
    tl, hl, wl = shape.lattice
    bt, bh, bw = shape.blocks
    any_valid = validity.reshape(tl, bt, hl, bh, wl, bw).any(axis=(1, 3, 5))
    return grid, ~any_valid.reshape(-1)
