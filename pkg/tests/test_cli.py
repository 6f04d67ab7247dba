import csv
import json
from importlib import resources

import pytest

from cpsb.cli import main

DATA = resources.files("cpsb") / "data"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_thresholds(capsys):
    code, out, _ = run(capsys, "thresholds")
    assert code == 0
    vals = dict(line.split("=") for line in out.split())
    assert float(vals["delta1"]) == pytest.approx(0.0050128, rel=1e-4)
    assert float(vals["delta2"]) == pytest.approx(0.0111557, rel=1e-4)


def test_beta(capsys):
    code, out, _ = run(capsys, "beta", "--x1", 0.5, "--x2", 0.02, "--x3", 0.02, "--current", 1)
    assert code == 0 and "beta=0.01875578" in out and "epsilon=0.42468" in out
    code, _, err = run(capsys, "beta", "--x1", 0.005, "--x2", 0.02, "--x3", 0.02, "--current", 1)
    assert code == 1 and "invalid input" in err


def test_schedtest_exit_codes(capsys):
    code, out, _ = run(capsys, "schedtest", "--config", DATA / "three_task.json")
    assert code == 0 and out.rstrip().endswith("schedulable")
    code, out, _ = run(capsys, "schedtest", "--config", DATA / "test1.json")
    assert code == 2 and "NOT schedulable" in out


def test_schedtest_policy_override(capsys):
    code, _, _ = run(capsys, "schedtest", "--config", DATA / "three_task.json", "--policy", "edf")
    assert code == 0


def test_robustness(capsys):
    code, out, _ = run(capsys, "robustness", "--config", DATA / "three_task.json")
    assert code == 0 and "B_R_us=8800" in out
    code, out, _ = run(capsys, "robustness", "--config", DATA / "three_task.json", "--policy", "edf")
    assert "B_R_us=11400" in out


def test_simulate_writes_artifacts(capsys, tmp_path):
    code, _, _ = run(capsys, "simulate", "--config", DATA / "three_task.json", "--out", tmp_path)
    assert code == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    for name in man["files"]:
        assert (tmp_path / name).exists()
    with open(tmp_path / "modes.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["task", "t_start_us", "t_end_us", "mode"]
    assert {r[3] for r in rows[1:]} <= {"0.0", "0.5", "1.0"}


def test_invalid_config_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--config", tmp_path / "nope.json", "--out", tmp_path)
    assert code == 1 and "not found" in err
    code, _, _ = run(capsys, "robustness", "--config", DATA / "test2.json")
    assert code == 1


def test_numerical_error_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "battery-run", "--current", 2, "--duration", 600, "--x1", 0.1, "--out", tmp_path)
    assert code == 3 and "numerical error" in err


def test_battery_run(capsys, tmp_path):
    code, out, _ = run(capsys, "battery-run", "--current", 1, "--duration", 10, "--out", tmp_path)
    assert code == 0
    with open(tmp_path / "battery.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 101
    assert float(rows[-1]["x1"]) == pytest.approx(1 - 10 / 990, rel=1e-12)


def test_argparse_rejects_bad_policy(capsys):
    with pytest.raises(SystemExit):
        main(["schedtest", "--config", "x.json", "--policy", "lifo"])
