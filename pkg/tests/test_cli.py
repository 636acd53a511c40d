import json
import subprocess
import sys

import numpy as np

from stlf.pipeline.cli import cli

SMALL_YAML = """repeats: 1
scenario: {num_devices: 4, samples_per_device: 80}
training: {iterations: 30}
divergence: {rounds: 3, local_iters: 5}
"""


def write_config(tmp_path, extra=""):
    p = tmp_path / "cfg.yaml"
    p.write_text(SMALL_YAML + extra)
    return p


def test_usage_errors_exit_one(capsys):
    assert cli([]) == 1
    assert cli(["run"]) == 1
    assert cli(["run", "--config", "x.yaml", "--frobnicate"]) == 1
    assert cli(["launch"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_config_exits_one(tmp_path):
    assert cli(["run", "--config", str(tmp_path / "nope.yaml")]) == 1


def test_invalid_config_exits_one(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("repeats: 0\n")
    assert cli(["run", "--config", str(p)]) == 1


def test_runtime_error_exits_two(tmp_path):
    bad = tmp_path / "div.csv"
    bad.write_text("0,0.5\n0.5,0\n")
    cfg = write_config(tmp_path, f"inject_divergence: {bad}\n")
    assert cli(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path, "baselines: [single_matching]\n")
    assert cli(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    doc = json.loads((tmp_path / "o" / "run_00" / "results.json").read_text())
    assert set(doc["methods"]) == {"stlf", "single_matching"}
    assert "stlf" in capsys.readouterr().out


def test_sweep_and_baseline(tmp_path, capsys):
    cfg = str(write_config(tmp_path))
    assert cli(["sweep", "--config", cfg, "--param", "phi_e", "--values", "0.01", "10000",
                "--out", str(tmp_path / "s")]) == 0
    line = json.loads(capsys.readouterr().out.strip().splitlines()[0])
    assert line["x"] == [0.01, 10000.0]
    assert cli(["sweep", "--config", cfg, "--param", "nonexistent", "--values", "1"]) == 1
    assert cli(["baseline", "--config", cfg, "--name", "random_alpha", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "baseline_random_alpha" / "summary.json").is_file()


def test_extreme_regime_puts_weight_on_device_one(tmp_path):
    assert cli(["regimes", "--kind", "extreme", "--out", str(tmp_path)]) == 0
    alpha = np.loadtxt(tmp_path / "regime_extreme" / "alpha.csv", delimiter=",")
    psi = np.loadtxt(tmp_path / "regime_extreme" / "psi.csv", delimiter=",", dtype=str)
    targets = [j for j, v in enumerate(psi) if v.strip().lower() in ("1", "true")]
    assert targets and np.all(alpha[0, targets] >= 0.95)


def test_regimes_rejects_bad_counts():
    assert cli(["regimes", "--kind", "uniform", "--devices", "4", "--labeled", "4"]) == 1


def test_selftest_passes(capsys):
    assert cli(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "stlf", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "selftest" in r.stdout
