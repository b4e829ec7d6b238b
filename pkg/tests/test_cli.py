import numpy as np
import pytest

from maskvid import io
from maskvid.cli import load_dataset, main
from maskvid.harness import RunConfig

TINY = """\
seed = 4
data.n_train = 16
data.n_eval = 3
tokenizer.v_vis = 12
tokenizer.max_iter = 4
predictor.epochs = 1
predictor.batch_size = 4
decode.steps = 3
eval.tasks = FP,CG
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.kv"
    cfg.write_text(TINY)
    c = ["--config", str(cfg)]
    assert main(["gen-data", *c, "--out", str(root / "data")]) == 0
    assert main(["fit-tokenizer", *c, "--data", str(root / "data" / "train"), "--out", str(root / "tok")]) == 0
    assert main(["train", *c, "--data", str(root / "data" / "train"), "--codebook", str(root / "tok" / "codebook.mgcb"),
                 "--out", str(root / "model")]) == 0
    return root, c


def test_gen_data_layout(workspace):
    root, _ = workspace
    videos, labels = load_dataset(root / "data" / "train")
    assert len(videos) == len(labels) == 16
    assert RunConfig.loads((root / "data" / "config.kv").read_text()).n_train == 16


def test_fit_and_train_outputs(workspace):
    root, _ = workspace
    cb = io.codebook_from_bytes((root / "tok" / "codebook.mgcb").read_bytes())
    assert cb.shape == (12, 4 * 8 * 8)
    assert (root / "tok" / "fit_report.csv").read_text().startswith("iteration,distortion\n")
    a, b, g, h = io.params_from_bytes((root / "model" / "params.mgpt").read_bytes())
    assert a.shape == (13, 12) and b.shape == (64, 12) and np.all(np.isfinite(b))
    assert (root / "model" / "loss_curve.csv").read_text().startswith("step,total,")


def test_generate_with_oracle_and_trace(workspace, tmp_path):
    root, c = workspace
    video = root / "data" / "eval" / "video_00000.mgvd"
    rc = main(["generate", *c, "--codebook", str(root / "tok" / "codebook.mgcb"), "--oracle",
               "--task", "OPC", "--in", str(video), "--steps", "5", "--trace", "--out", str(tmp_path)])
    assert rc == 0
    steps = sorted((tmp_path / "trace").iterdir())
    assert [p.name for p in steps] == [f"step_{i:02d}.mgtk" for i in range(5)]
    final = io.tokens_from_bytes((tmp_path / "tokens.mgtk").read_bytes(), blocks=(4, 8, 8))
    assert io.tokens_from_bytes(steps[-1].read_bytes(), blocks=(4, 8, 8)) == final
    out = io.video_from_bytes((tmp_path / "generated.mgvd").read_bytes())
    assert out.dims == (16, 32, 32)


def test_generate_class_conditional_with_params(workspace, tmp_path):
    root, c = workspace
    args = ["generate", *c, "--codebook", str(root / "tok" / "codebook.mgcb"),
            "--params", str(root / "model" / "params.mgpt"), "--task", "CG", "--class", "2", "--preset", "k600"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "generated.mgvd").read_bytes() == (tmp_path / "b" / "generated.mgvd").read_bytes()


def test_evaluate_oracle(workspace, tmp_path):
    root, c = workspace
    rc = main(["evaluate", *c, "--data", str(root / "data" / "eval"), "--codebook", str(root / "tok" / "codebook.mgcb"),
               "--oracle", "--out", str(tmp_path)])
    assert rc == 0
    kv = io.loads_kv((tmp_path / "report.kv").read_text())
    assert float(kv["FP.token_accuracy"]) == 1.0 and float(kv["CG.token_accuracy"]) == 1.0


def test_run_prints_and_writes_report(workspace, tmp_path, capsys):
    _, c = workspace
    assert main(["run", *c, "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out
    assert printed == (tmp_path / "report.kv").read_text()
    assert "FP.token_accuracy" in printed


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.kv"
    bad.write_text("decode.steps = 0\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text("tokenizer.block_w = 7\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.kv"), "--out", str(tmp_path / "o")]) == 2
    bad.write_text("data.n_train = 1\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "tokenizer" in capsys.readouterr().err


def test_generate_requires_predictor_and_input(workspace, tmp_path):
    root, c = workspace
    cb = str(root / "tok" / "codebook.mgcb")
    assert main(["generate", *c, "--codebook", cb, "--task", "FP", "--oracle", "--out", str(tmp_path)]) == 2
    assert main(["generate", *c, "--codebook", cb, "--task", "CG", "--class", "0", "--out", str(tmp_path)]) == 2


def test_corrupt_artifact_exits_3(workspace, tmp_path):
    root, c = workspace
    broken = tmp_path / "broken.mgcb"
    broken.write_bytes(b"MGCB\x07")
    rc = main(["train", *c, "--data", str(root / "data" / "train"), "--codebook", str(broken), "--out", str(tmp_path)])
    assert rc == 3
