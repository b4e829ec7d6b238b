import math
from dataclasses import replace

import numpy as np
import pytest

from maskvid import io
from maskvid.core import TASKS, ConfigError, DimensionError, GridShape, TokenGrid, VideoTensor, make_rng
from maskvid.decoder import DecodeConfig
from maskvid.harness import (
    RunConfig,
    StageError,
    SyntheticDatasetSpec,
    gen_synthetic,
    psnr,
    run_experiment,
    token_accuracy,
)
from maskvid.predictor import TrainConfig
from maskvid.tasks import TaskSpec


def tiny_config(**kw) -> RunConfig:
    base = dict(seed=3, n_train=24, n_eval=4, v_vis=16, max_iter=5,
                train=TrainConfig(epochs=1, batch_size=4), decode=DecodeConfig(steps=4))
    base.update(kw)
    return RunConfig(**base)


def test_class_zero_moves_right_and_wraps():
    vids, labels = gen_synthetic(SyntheticDatasetSpec(n_videos=30, dims=(40, 16, 16), rect=4, seed=2))
    i = labels.index(0)
    data = vids[i].data[..., 0]
    cols0 = np.flatnonzero(data[0].any(axis=0))
    assert cols0.size == 4
    for tau in range(40):
        cols = set(np.flatnonzero(data[tau].any(axis=0)).tolist())
        assert cols == {(int(c) + tau) % 16 for c in cols0}
        assert data[tau].sum() > 0 and set(np.unique(data[tau])) <= {0.0, 0.5, 0.75, 1.0}


@pytest.mark.parametrize("label, step", [(1, (0, -1)), (2, (1, 0)), (3, (-1, 0))])
def test_other_directions(label, step):
    vids, labels = gen_synthetic(SyntheticDatasetSpec(n_videos=40, dims=(3, 16, 16), rect=3, seed=4))
    v = vids[labels.index(label)].data[..., 0]
    for tau in range(2):
        shifted = np.roll(v[tau], shift=step, axis=(0, 1))
        assert np.array_equal(shifted, v[tau + 1])


def test_dataset_is_deterministic_and_validated():
    spec = SyntheticDatasetSpec(n_videos=5, seed=9)
    a, la = gen_synthetic(spec)
    b, lb = gen_synthetic(spec)
    assert la == lb and all(x.data.tobytes() == y.data.tobytes() for x, y in zip(a, b))
    assert gen_synthetic(replace(spec, n_videos=0)) == ([], [])
    with pytest.raises(ConfigError):
        gen_synthetic(replace(spec, rect=33))


def test_token_accuracy_examples():
    shape = GridShape(1, 10, 10)
    a = TokenGrid(shape, np.zeros(100, int), 32)
    b = TokenGrid(shape, np.ones(100, int), 32)
    assert token_accuracy(a, a) == 1.0 and token_accuracy(a, b) == 0.0
    region = np.zeros(100, bool)
    region[:10] = True
    assert token_accuracy(a, a, region) == 1.0
    with pytest.raises(DimensionError):
        token_accuracy(a, TokenGrid(GridShape(1, 1, 100), np.zeros(100, int), 32))


def test_random_token_accuracy_is_one_over_v():
    rng = make_rng(0)
    shape = GridShape(1, 100, 100)
    a, b = (TokenGrid(shape, rng.integers(0, 32, shape.n), 32) for _ in range(2))
    assert abs(token_accuracy(a, b) - 1 / 32) < 0.006


def test_psnr_examples():
    zero = VideoTensor(np.zeros((2, 4, 4)))
    half = VideoTensor(np.full((2, 4, 4), 0.5))
    assert psnr(zero, zero) == 99.0
    assert psnr(zero, half) == pytest.approx(6.0206, abs=1e-4)
    rng = make_rng(1)
    a, b = VideoTensor(rng.random((2, 4, 4))), VideoTensor(rng.random((2, 4, 4)))
    assert psnr(a, b) == psnr(b, a) >= 0.0
    with pytest.raises(DimensionError):
        psnr(zero, VideoTensor(np.zeros((2, 4, 5))))


def test_config_round_trip():
    cfg = tiny_config(task=TaskSpec("OPC", h_frac=0.25), eval_tasks=("FP", "CG"), levels=(0.25, 1.0))
    text = cfg.dumps()
    again = RunConfig.loads(text)
    assert again == cfg and again.dumps() == text


def test_config_rejects_unknown_keys_and_values():
    with pytest.raises(ConfigError):
        RunConfig.loads("nonsense.key = 1\n")
    with pytest.raises(ConfigError):
        RunConfig.loads("decode.steps = zero\n")
    with pytest.raises(ConfigError):
        tiny_config(eval_tasks=("XX",)).validate()
    with pytest.raises(DimensionError):
        tiny_config(blocks=(4, 8, 7)).validate()


def test_oracle_pipeline_is_exact_on_every_task():
    report = run_experiment(tiny_config(predictor="oracle", baseline=False))
    assert set(report.tasks) == set(TASKS)
    for kind, m in report.tasks.items():
        assert m.token_accuracy == 1.0, kind


def test_untrained_predictor_is_near_chance():
    report = run_experiment(tiny_config(predictor="untrained", n_eval=8, eval_tasks=("CG",), baseline=False))
    assert report.tasks["CG"].token_accuracy < 0.2
    assert report.loss_curve == []


def test_stage_errors_are_tagged():
    with pytest.raises(StageError) as info:
        run_experiment(tiny_config(n_train=1))
    assert info.value.stage == "tokenizer"


def test_artifacts_round_trip_bytes(tmp_path):
    cfg = tiny_config(eval_tasks=("FP",))
    report = run_experiment(cfg, tmp_path)
    assert {p.name for p in tmp_path.iterdir()} == {
        "config.kv", "codebook.mgcb", "params.mgpt", "report.kv", "loss_curve.csv", "timing.kv"}
    cb = (tmp_path / "codebook.mgcb").read_bytes()
    assert io.codebook_to_bytes(io.codebook_from_bytes(cb)) == cb
    pt = (tmp_path / "params.mgpt").read_bytes()
    assert io.params_to_bytes(*io.params_from_bytes(pt)) == pt
    text = (tmp_path / "config.kv").read_text()
    assert RunConfig.loads(text).dumps() == text
    rep = (tmp_path / "report.kv").read_text()
    assert rep == report.dumps()
    kv = io.loads_kv(rep)
    assert 0.0 <= float(kv["FP.token_accuracy"]) <= 1.0
    assert math.isfinite(float(kv["train.loss_last"]))
    csv_rows = (tmp_path / "loss_curve.csv").read_text().splitlines()
    assert len(csv_rows) == 1 + len(report.loss_curve)
