import json
import subprocess
import sys

import numpy as np
import pytest

from dpscore.btl import sample_comparisons, write_comparisons_csv
from dpscore.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from dpscore.glm import LOGISTIC, generate_glm, write_glm_csv
from dpscore.mechanisms import SeededRng


@pytest.fixture
def glm_csv(tmp_path):
    path = tmp_path / "glm.csv"
    write_glm_csv(path, generate_glm(3000, 3, np.full(3, 0.5), LOGISTIC, SeededRng(3), "l2_scaled", 1.0))
    return path


@pytest.fixture
def sparse_csv(tmp_path):
    beta = np.zeros(20)
    beta[:2] = 1.0
    path = tmp_path / "sparse.csv"
    write_glm_csv(path, generate_glm(2000, 20, beta, LOGISTIC, SeededRng(4), "linf", 1.0))
    return path


@pytest.fixture
def xy_csv(tmp_path):
    gen = SeededRng(5).generator
    x = gen.random(500)
    y = np.sqrt(2) * np.cos(2 * np.pi * x) + gen.standard_normal(500)
    path = tmp_path / "xy.csv"
    np.savetxt(path, np.column_stack([x, y]), delimiter=",", header="x,y", comments="")
    return path


def run_json(argv, capsys):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


def test_fit_glm_stdout(glm_csv, capsys):
    code, doc = run_json(["fit-glm", "--data", str(glm_csv), "--eps", "2", "--seed", "1"], capsys)
    assert code == EXIT_OK
    assert len(doc["beta"]) == 3


def test_fit_glm_is_reproducible(glm_csv, tmp_path):
    for name in ("a", "b"):
        assert main(["fit-glm", "--data", str(glm_csv), "--eps", "1", "--seed", "9", "--out", str(tmp_path / name)]) == EXIT_OK
    assert (tmp_path / "a" / "fit_glm.json").read_text() == (tmp_path / "b" / "fit_glm.json").read_text()


def test_fit_sparse_glm(sparse_csv, capsys):
    code, doc = run_json(["fit-sparse-glm", "--data", str(sparse_csv), "--s-star", "2", "--s", "4", "--T", "5", "--eps", "2"], capsys)
    assert code == EXIT_OK
    assert np.count_nonzero(doc["beta"]) <= 4


def test_fit_btl(tmp_path, capsys):
    path = tmp_path / "btl.csv"
    write_comparisons_csv(path, sample_comparisons(30, 0.5, np.linspace(-1, 1, 30), SeededRng(2)))
    code, doc = run_json(["fit-btl", "--data", str(path), "--n-items", "30", "--eps", "1"], capsys)
    assert code == EXIT_OK
    assert doc["privacy_certified"] is True
    assert abs(sum(doc["theta"])) < 1e-9


def test_fit_nonparam_writes_table(xy_csv, tmp_path):
    out = tmp_path / "np"
    assert main(["fit-nonparam", "--data", str(xy_csv), "--eps", "1", "--K", "2", "--sigma", "1", "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "fit_nonparam.json").read_text())["K"] == 2
    assert np.loadtxt(out / "evaluation.csv", delimiter=",", skiprows=1).shape == (512, 2)


def test_degenerate_grid_is_numerical_failure(xy_csv):
    argv = ["fit-nonparam", "--data", str(xy_csv), "--eps", "1", "--K", "5", "--sigma", "1", "--grid-size", "2", "--burn-in", "1", "--thin", "1"]
    assert main(argv) == EXIT_NUMERICAL


@pytest.mark.parametrize("model", ["gaussian_location", "glm", "btl"])
def test_attack(model, tmp_path, capsys):
    out = tmp_path / model
    argv = ["attack", "--model", model, "--n", "20", "--d", "2", "--replicates", "5", "--out", str(out)]
    if model != "gaussian_location":
        argv += ["--eps", "1"]
    assert main(argv) == EXIT_OK
    lines = (out / "attack.csv").read_text().splitlines()
    assert lines[0] == "replicate,candidate,membership,A" and len(lines) == 11
    assert json.loads((out / "attack.json").read_text())["model"] == model


def test_attack_requires_out():
    assert main(["attack", "--model", "gaussian_location", "--n", "5", "--replicates", "2"]) == EXIT_CONFIG


def test_audit(capsys):
    code, doc = run_json(["audit", "--mechanism", "laplace", "--eps", "1", "--trials", "100000"], capsys)
    assert code == EXIT_OK and doc["epsilon_hat"] <= 1.1
    assert main(["audit", "--mechanism", "gaussian", "--eps", "1"]) == EXIT_CONFIG


def test_bench_and_rate_fit(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("model = glm\nn = 200, 400, 800\nd = 2\nreplicates = 3\nseed = 4\n")
    out = tmp_path / "bench"
    assert main(["bench", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    first = (out / "results.csv").read_text()
    assert len(first.splitlines()) == 10
    assert main(["bench", "--config", str(cfg), "--out", str(out), "--threads", "2"]) == EXIT_OK
    assert (out / "results.csv").read_text() == first
    assert json.loads((out / "summary.json").read_text())["seed"] == 4
    capsys.readouterr()
    code, doc = run_json(["rate-fit", "--input", str(out / "results.csv"), "--x", "n"], capsys)
    assert code == EXIT_OK and len(doc["cells"]) == 3


def test_bench_seed_flag_overrides_config(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("model = glm\nn = 200\nd = 2\nseed = 4\n")
    assert main(["bench", "--config", str(cfg), "--out", str(tmp_path), "--seed", "8"]) == EXIT_OK
    assert json.loads((tmp_path / "summary.json").read_text())["seed"] == 8


@pytest.mark.parametrize(
    "argv",
    [
        ["fit-glm", "--data", "/nonexistent.csv", "--eps", "1"],
        ["fit-btl", "--data", "/nonexistent.csv", "--eps", "1"],
        ["bench", "--config", "/nonexistent.cfg"],
        ["audit", "--mechanism", "laplace", "--eps", "-1", "--trials", "10"],
    ],
)
def test_config_errors(argv):
    assert main(argv) == EXIT_CONFIG


def test_bad_config_text(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model = glm\nn = 100\nreplicates = -1\n")
    assert main(["bench", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_argparse_usage_error_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["fit-glm"])
    assert info.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "dpscore.cli", "audit", "--mechanism", "laplace", "--eps", "1", "--trials", "1000"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "epsilon_hat" in proc.stdout
