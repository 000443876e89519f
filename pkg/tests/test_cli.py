import numpy as np
import pytest

from scan.cli import main, probe_discrepancy
from scan.serialize import load_model

CONFIG = """seed=2
widths=3,3
epochs=2
dataset.train_samples=64
dataset.test_samples=32
"""


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.cfg"
    cfg.write_text(CONFIG)
    model = root / "sac.bin"
    assert main(["train", "--config", str(cfg), "--out", str(model)]) == 0
    return root, model


def test_train_history(trained, capsys):
    root, model = trained
    cfg = root / "run.cfg"
    assert main(["train", "--config", str(cfg), "--out", str(root / "again.bin")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("epoch,lr,total")
    assert len(out) == 4
    assert (root / "again.bin").read_bytes() == model.read_bytes()


def test_eval(trained, capsys):
    _, model = trained
    assert main(["eval", "--model", str(model), "--dataset", "test_samples=40,seed=5"]) == 0
    out = capsys.readouterr().out
    assert "samples: 40" in out and "class 3" in out
    assert main(["eval", "--model", str(model), "--dataset", "test_samples=40", "--blur", "2"]) == 0
    assert "blurred (t=2)" in capsys.readouterr().out


def test_absorb_and_blur_bench(trained, capsys):
    root, model = trained
    plain = root / "plain.bin"
    assert main(["absorb", "--model-in", str(model), "--model-out", str(plain)]) == 0
    out = capsys.readouterr().out
    assert "discrepancy" in out
    assert load_model(plain).form == "absorbed"
    assert main(["absorb", "--model-in", str(plain), "--model-out", str(root / "x.bin")]) == 2
    capsys.readouterr()
    assert main(["blur-bench", "--model-a", str(model), "--model-b", str(plain),
                 "--dataset", "test_samples=32"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "t_blur in [1, 4]" in lines[0] and len(lines) == 3


def test_probe_discrepancy_small(trained):
    _, model = trained
    net = load_model(model)
    assert probe_discrepancy(net) < 1e-4
    assert probe_discrepancy(net.astype(np.float64)) < 1e-10


def test_scale_peak(tmp_path, capsys):
    out = tmp_path / "peak.csv"
    assert main(["oracle", "scale-peak", "--omega", "1", "--order", "1", "--t-min", "0.5",
                 "--t-max", "6", "--t-step", "0.05", "--out", str(out)]) == 0
    summary = capsys.readouterr().out
    t_hat = float(summary.split()[0].split("=")[1])
    assert abs(t_hat - 2.0) / 2.0 < 0.05
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# omega=1") and lines[1] == "t,amplitude,analytic"


def test_scale_peak_boundary_error(capsys):
    code = main(["oracle", "scale-peak", "--omega", "1", "--order", "1", "--t-min", "3",
                 "--t-max", "6", "--t-step", "0.5"])
    assert code == 2
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("sub,extra,header", [
    ("hist", [], "layer,bin_center,density"),
    ("filters", ["--layer", "1"], "layer,filter,channel,t,class"),
    ("truncation", [], "layer,filter,t,truncation_mass"),
])
def test_analyze(trained, tmp_path, sub, extra, header):
    _, model = trained
    out = tmp_path / f"{sub}.csv"
    assert main(["analyze", sub, "--model", str(model), "--out", str(out)] + extra) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# ") and lines[1].startswith(header)


def test_missing_file(capsys):
    assert main(["eval", "--model", "/nonexistent/model.bin"]) == 2


def test_corrupt_model(tmp_path, trained):
    _, model = trained
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXX" + model.read_bytes()[4:])
    assert main(["analyze", "hist", "--model", str(bad)]) == 2
