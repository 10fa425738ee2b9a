import csv
import json
import subprocess
import sys

import pytest

from scpkit import cli
from scpkit import hovercraft as hv


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_no_command_is_usage_error(capsys):
    assert run() == 1
    assert "command" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert run("--help") == 0
    assert "simulate" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["simulate", "--x-init", "1,2,3"],
    ["simulate", "--n", "0"],
    ["simulate", "--dt", "-0.1"],
    ["simulate", "--horizon", "0"],
    ["simulate", "--weights-q", "1,1"],
    ["simulate", "--bogus"],
    ["scp-study", "--problem", "unknown"],
    ["scp-study", "--problem", "linear", "--xi", "1"],
    ["contraction", "--samples", "1"],
    ["contraction", "--jobs", "0"],
    ["check", "--problems"],
    ["check", "--points", "0"],
    ["check", "--tol", "-1"],
])
def test_usage_errors(tmp_path, argv):
    assert run(*argv, "--out", tmp_path) == 1


def test_unwritable_out(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("check", "--problems", "linear", "--out", blocker / "sub") == 1


def test_simulate_default_and_outputs(tmp_path, capsys):
    assert run("simulate", "--out", tmp_path) == 0
    assert "stop_time=" in capsys.readouterr().out
    summary = json.load(open(tmp_path / "sim_summary.json"))
    assert summary["reached"] and summary["stop_time"] <= 15.0
    rows = list(csv.reader(open(tmp_path / "sim_trace.csv")))
    assert rows[0] == hv.SIM_COLUMNS
    assert all(r[10] == "" for r in rows[1:])  # timing off by default
    assert sum(1 for _ in open(tmp_path / "rtscp_records.jsonl")) == summary["samples"]


def test_simulate_already_parked(tmp_path):
    assert run("simulate", "--x-init", "0,0,0,0,0,0", "--out", tmp_path) == 0
    assert json.load(open(tmp_path / "sim_summary.json"))["stop_time"] == 0.0


def test_simulate_not_reached_is_numeric_failure(tmp_path, capsys):
    assert run("simulate", "--horizon", "0.3", "--out", tmp_path) == 2
    assert "not reached" in capsys.readouterr().err


def test_simulate_aborted(tmp_path, capsys):
    assert run("simulate", "--horizon", "1", "--max-iters", "1", "--out", tmp_path) == 2
    assert "aborted" in capsys.readouterr().err


def test_simulate_timing_and_trace(tmp_path):
    assert run("simulate", "--horizon", "0.2", "--timing", "--trace", "--out", tmp_path) == 2
    rows = list(csv.reader(open(tmp_path / "rtscp_records.csv")))
    assert float(rows[1][3]) > 0
    assert (tmp_path / "ipm_trace.csv").exists()


def test_simulate_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run("simulate", "--horizon", "0.5", "--out", tmp_path / d) == 2
    for f in ("sim_trace.csv", "rtscp_records.csv", "rtscp_records.jsonl"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_scp_study_hovercraft(tmp_path):
    assert run("scp-study", "--out", tmp_path) == 0
    data = json.load(open(tmp_path / "scp_report.json"))
    assert data["status"] == "Converged" and data["ratios"] and data["reference_error"] is None
    rows = list(csv.reader(open(tmp_path / "scp_report.csv")))
    assert rows[0][-1] == "ratio" and len(rows) == data["iterations"] + 1


def test_scp_study_linear_one_iteration(tmp_path):
    assert run("scp-study", "--problem", "linear", "--xi", "0.1,0.3", "--out", tmp_path) == 0
    data = json.load(open(tmp_path / "scp_report.json"))
    assert data["iterations"] == 1 and data["xi"] == [0.1, 0.3]


def test_scp_study_iteration_cap(tmp_path):
    assert run("scp-study", "--max-iters", "1", "--tol", "1e-14", "--out", tmp_path) == 2
    assert json.load(open(tmp_path / "scp_report.json"))["status"] == "MaxIterations"


def test_scp_study_json_problem(tmp_path):
    path = tmp_path / "prob.json"
    path.write_text(json.dumps({"builder": "linear", "params": {"A": [[1.0, 1.0]], "b": [0.5]},
                                "c": [1.0, 0.0], "M": [[0.0]], "H": [[1.0, 0.0], [0.0, 1.0]],
                                "omega": {"lower": [-1, -1], "upper": [1, 1]}}))
    assert run("scp-study", "--problem", path, "--out", tmp_path) == 0


def test_contraction_synthetic(tmp_path, capsys):
    assert run("contraction", "--samples", "6", "--out", tmp_path) == 0
    assert "omega_hat=" in capsys.readouterr().out
    fit = json.load(open(tmp_path / "contraction_fit.json"))
    assert fit["complete"] and fit["samples"] == 6 and "synthetic" in fit["source"]
    assert len(list(csv.reader(open(tmp_path / "contraction_records.csv")))) == 6


def test_contraction_replay(tmp_path):
    sim = tmp_path / "sim"
    assert run("simulate", "--horizon", "0.4", "--out", sim) == 2
    out = tmp_path / "c"
    assert run("contraction", "--replay", sim / "sim_trace.csv", "--out", out) == 0
    fit = json.load(open(out / "contraction_fit.json"))
    assert fit["samples"] == 8 and fit["source"]["replay"].endswith("sim_trace.csv")


def test_contraction_replay_errors(tmp_path):
    assert run("contraction", "--replay", tmp_path / "missing.csv", "--out", tmp_path) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert run("contraction", "--replay", bad, "--out", tmp_path) == 1


def test_contraction_oracle_failure(tmp_path):
    assert run("contraction", "--samples", "3", "--oracle-tol", "1e-30", "--out", tmp_path) == 2
    assert not json.load(open(tmp_path / "contraction_fit.json"))["complete"]


def test_check_passes(tmp_path):
    assert run("check", "--problems", "hovercraft", "linear", "--points", "10", "--out", tmp_path) == 0
    rep = json.load(open(tmp_path / "check_report.json"))
    assert [r["problem"] for r in rep["results"]] == ["hovercraft", "linear"]
    assert all(r["jacobian_ok"] and r["slater"] for r in rep["results"])


def test_check_finds_planted_bug(tmp_path, capsys):
    assert run("check", "--problems", "planted_bug", "--points", "5", "--out", tmp_path) == 2
    assert "FAIL planted_bug: Jacobian entry (0, 0) relative error 0.333" in capsys.readouterr().err
    loc = json.load(open(tmp_path / "check_report.json"))["results"][0]["location"]
    assert (loc["row"], loc["col"]) == (0, 0)


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "scpkit.cli", "check", "--problems", "linear",
                          "--points", "3", "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0 and "linear" in out.stdout
