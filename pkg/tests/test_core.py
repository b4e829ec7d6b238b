import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maskvid.core import (
    ConfigError,
    DimensionError,
    GridShape,
    TokenGrid,
    VideoTensor,
    VocabularyError,
    VocabularyLayout,
    flatten_index,
    gumbel,
    make_rng,
    supervoxel_of,
    unflatten_index,
)

FULL_GRID = GridShape(4, 16, 16)


@pytest.mark.parametrize(
    "coord, expected",
    [((0, 0, 0), 0), ((1, 0, 0), 256), ((3, 15, 15), 1023)],
)
def test_flatten_index_examples(coord, expected):
    assert flatten_index(coord, FULL_GRID) == expected


@pytest.mark.parametrize("coord", [(4, 0, 0), (0, 16, 0), (0, 0, -1)])
def test_flatten_index_out_of_range(coord):
    with pytest.raises(IndexError):
        flatten_index(coord, FULL_GRID)


@pytest.mark.parametrize("lat", [(1, 1, 1), (2, 3, 5), (4, 16, 16), (16, 16, 16)])
def test_flatten_unflatten_exhaustive(lat):
    shape = GridShape(*lat)
    seen = []
    for coord in itertools.product(*(range(d) for d in lat)):
        idx = flatten_index(coord, shape)
        assert unflatten_index(idx, shape) == coord
        seen.append(idx)
    assert seen == list(range(shape.n))


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.data())
def test_flatten_matches_numpy_ravel(t, h, w, data):
    shape = GridShape(t, h, w)
    coord = tuple(data.draw(st.integers(0, d - 1)) for d in (t, h, w))
    assert flatten_index(coord, shape) == np.ravel_multi_index(coord, (t, h, w))


def test_supervoxel_examples():
    shape = GridShape.for_video((16, 32, 32), (4, 8, 8))
    assert supervoxel_of(0, shape) == ((0, 4), (0, 8), (0, 8))
    assert supervoxel_of(1, shape) == ((0, 4), (0, 8), (8, 16))
    with pytest.raises(IndexError):
        supervoxel_of(shape.n, shape)


@pytest.mark.parametrize("lat, blocks", [((2, 2, 2), (1, 2, 3)), ((1, 3, 2), (2, 2, 2)), ((4, 4, 4), (4, 8, 8))])
def test_supervoxels_tile_the_video(lat, blocks):
    shape = GridShape(*lat, *blocks)
    cover = np.zeros(shape.video_dims, dtype=int)
    for i in range(shape.n):
        (t0, t1), (y0, y1), (x0, x1) = supervoxel_of(i, shape)
        assert (t1 - t0, y1 - y0, x1 - x0) == blocks
        cover[t0:t1, y0:y1, x0:x1] += 1
    assert np.all(cover == 1)


def test_grid_shape_requires_exact_division():
    with pytest.raises(DimensionError):
        GridShape.for_video((16, 30, 32), (4, 8, 8))
    with pytest.raises(ConfigError):
        GridShape(0, 1, 1)


def test_gumbel_at_inverse_e_is_zero():
    assert -math.log(-math.log(1 / math.e)) == pytest.approx(0.0, abs=1e-15)


def test_gumbel_monotone_in_u():
    u = np.linspace(1e-12, 1 - 1e-12, 1001)
    g = -np.log(-np.log(u))
    assert np.all(np.diff(g) > 0)


def test_gumbel_mean_is_euler_mascheroni():
    draws = gumbel(make_rng(0), 100_000)
    assert np.all(np.isfinite(draws))
    assert abs(draws.mean() - 0.5772156649) < 0.02


def test_rng_streams_are_reproducible():
    a = make_rng(42).random(64).tobytes()
    b = make_rng(42).random(64).tobytes()
    assert a == b
    assert make_rng(43).random(64).tobytes() != a


def test_video_tensor_validation():
    v = VideoTensor(np.zeros((2, 4, 4)))
    assert v.channels == 1 and v.dims == (2, 4, 4)
    with pytest.raises(ValueError):
        VideoTensor(np.full((2, 2, 2, 1), 1.5))
    with pytest.raises(ArithmeticError):
        VideoTensor(np.full((2, 2, 2, 1), np.nan))
    with pytest.raises(DimensionError):
        VideoTensor(np.zeros((2, 2)))
    assert v.data.flags.writeable is False


def test_token_grid_range_checked():
    shape = GridShape(1, 2, 2)
    with pytest.raises(VocabularyError):
        TokenGrid(shape, [0, 1, 2, 8], v_vis=8)
    with pytest.raises(DimensionError):
        TokenGrid(shape, [0, 1, 2], v_vis=8)
    grid = TokenGrid.from_lattice(np.arange(4).reshape(1, 2, 2), shape, 8)
    assert grid.lattice().tolist() == [[[0, 1], [2, 3]]]


def test_vocabulary_layout():
    lay = VocabularyLayout(n_classes=4, v_vis=32)
    assert (lay.mask_id, lay.noclass_id, lay.task_base, lay.class_base) == (0, 1, 2, 12)
    assert lay.visual_base == 16 and lay.size == 48
    assert lay.task_token("FP") == 2 and lay.task_token("CFP") == 11
    assert lay.class_token(None) == 1 and lay.class_token(3) == 15
    assert lay.class_row(lay.noclass_id) == 4
    seq = lay.sequence(lay.task_token("FP"), lay.noclass_id, lay.to_unified(np.zeros(1024, int)))
    # one task prompt + one class token + 4x16x16 visual slots
    assert seq.size == 1026
    with pytest.raises(VocabularyError):
        lay.class_token(4)
    with pytest.raises(VocabularyError):
        lay.check_corrupted([5])
