import csv
import json
import subprocess
import sys

import pytest

from susopt.cli import main

CONFIG = {
    "problem": {"d": 4, "kappa": [5.0, 50.0], "n_train": 8, "n_test": 6},
    "env": {"K": 10, "m1": 4, "m2": 5},
    "agent": {"N": 15},
    "tuner": {"max_iters": 10, "sample_size": 4},
    "sweep": {"episodes": [5, 10], "seeds": 2, "resolutions": [[4, 5]], "dims": [3, 4]},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(CONFIG))
    return path


def run(cmd, config, out, seed=7):
    return main([cmd, "--config", str(config), "--seed", str(seed), "--out", str(out)])


def pipeline(config, out, seed=7):
    for cmd in ("gen-problems", "tune", "train", "eval", "export-policy"):
        assert run(cmd, config, out, seed) == 0, cmd


def test_full_pipeline(config, tmp_path, capsys):
    out = tmp_path / "run"
    pipeline(config, out)
    for name in ("train_problems.npz", "test_problems.npz", "tuned.json", "qtable.npz", "policy.npz",
                 "training.csv", "eval.csv", "eval_summary.json", "history.csv", "policy.csv"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest_eval.json").read_text())
    assert manifest["master_seed"] == 7 and manifest["command"] == "eval"
    assert set(manifest["outputs"]) == {"eval.csv", "history.csv", "eval_summary.json"}
    assert "numpy" in manifest["versions"]
    rows = list(csv.DictReader(open(out / "eval.csv")))
    assert len(rows) == 6
    assert "relative_improvement" in capsys.readouterr().out


def test_end_to_end_deterministic(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    pipeline(config, a)
    pipeline(config, b)
    for name in ("tuned.json", "qtable.npz", "policy.npz", "eval.csv", "history.csv", "policy.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert (json.loads((a / "manifest_eval.json").read_text())["outputs"]
            == json.loads((b / "manifest_eval.json").read_text())["outputs"])


def test_sweeps(config, tmp_path):
    out = tmp_path / "s"
    assert run("sweep-episodes", config, out) == 0
    assert len(list(csv.DictReader(open(out / "sweep_episodes.csv")))) == 2
    assert run("sweep-dim", config, out) == 0
    assert [r["d"] for r in csv.DictReader(open(out / "sweep_dim.csv"))] == ["3", "4"]


def test_train_before_generation_fails(config, tmp_path, capsys):
    assert run("train", config, tmp_path / "empty") == 1
    assert "gen-problems" in capsys.readouterr().err


def test_seed_mismatch_detected(config, tmp_path, capsys):
    out = tmp_path / "r"
    pipeline(config, out)
    assert run("eval", config, out, seed=8) == 1
    assert "error" in capsys.readouterr().err


def test_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"problem": {"d": 3, "colour": "red"}}))
    assert main(["gen-problems", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "colour" in capsys.readouterr().err
    assert main(["tune", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["tune", "--seed", "-1", "--out", str(tmp_path)]) == 1


def test_module_entry_point(config, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "susopt", "gen-problems", "--config", str(config),
                           "--seed", "1", "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m" / "manifest_gen-problems.json").exists()
