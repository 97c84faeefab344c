import json
import os

import numpy as np
import pytest

from laxhj.cli import EXIT_CHECK, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, ExperimentConfig, UsageError, main
from laxhj.domain import read_csv


def run(tmp_path, *args, out="out"):
    code = main([*args, "--out", str(tmp_path / out)])
    report = tmp_path / out / "report.json"
    return code, (json.loads(report.read_text()) if report.exists() else None)


def test_flow_fixed_points(tmp_path):
    code, rep = run(tmp_path, "flow", "--model", "e3", "--fixed-points", "--check")
    assert code == EXIT_OK
    assert rep["checks"]["four_fixed_points_classified"]
    assert len(rep["fixed_points"]) == 4
    saved = json.loads((tmp_path / "out" / "fixed_points.json").read_text())
    assert [fp["class"] for fp in saved] == ["saddle", "stable-focus", "saddle", "unstable-focus"]


def test_reports_are_byte_identical(tmp_path):
    run(tmp_path, "flow", "--model", "e3", "--fixed-points", out="a")
    run(tmp_path, "flow", "--model", "e3", "--fixed-points", out="b")
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_solve_is_deterministic_and_writes_csv(tmp_path):
    run(tmp_path, "solve", "--model", "e1", "--c", "5", "--n", "64", out="a")
    code, rep = run(tmp_path, "solve", "--model", "e1", "--c", "5", "--n", "64", "--check", out="b")
    assert code == EXIT_OK
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    u = read_csv(tmp_path / "b" / rep["u_max_csv"])
    assert u.grid.n == 64


def test_trajectory_on_shell(tmp_path):
    x0, p0 = 1.0, 0.3
    u0 = float(-(0.5 * p0**2 + np.cos(2 * x0) - 1) / np.sin(x0))
    code, rep = run(tmp_path, "flow", "--model", "e3", "--trajectory", str(x0), repr(u0), str(p0), "--t-span", "2", "--check")
    assert code == EXIT_OK
    assert rep["checks"]["H_conserved"]
    header = (tmp_path / "out" / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,x,u,p,H"


def test_check_failure_exit_code(tmp_path):
    # At n=128 the grid solution is still about 0.1 away from the shooting profile.
    code, rep = run(tmp_path, "solve", "--model", "e3", "--n", "128", "--check")
    assert code == EXIT_CHECK
    assert not rep["checks"]["oracle_sup_diff<=5e-2"]


def test_failed_check_without_flag_exits_zero(tmp_path):
    code, _ = run(tmp_path, "solve", "--model", "e3", "--n", "128")
    assert code == EXIT_OK


def test_numeric_failure_exit_code(tmp_path):
    code, rep = run(tmp_path, "solve", "--model", "e1", "--c", "-1", "--n", "64")
    assert code == EXIT_NUMERIC
    assert "no solution" in rep["numerical_failure"]


@pytest.mark.parametrize(
    "args",
    [
        ["bogus"],
        ["solve", "--n", "3"],
        ["solve", "--model", "e7"],
        ["solve", "--n", "abc"],
        ["solve", "--dt", "-1"],
        ["solve", "--dt", "3"],
    ],
)
def test_usage_errors(tmp_path, args):
    assert main([*args, "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_config_file_overridden_by_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "e1", "c": 5.0, "n": 32, "tol_fix": 1e-6}))
    code, rep = run(tmp_path, "solve", "--config", str(cfg), "--n", "64")
    assert code == EXIT_OK
    assert rep["n"] == 64 and rep["c"] == 5.0


def test_config_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"modle": "e1"}))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_model_file_and_c_override(tmp_path):
    mfile = tmp_path / "m.json"
    mfile.write_text(json.dumps({"builtin": "e1", "c": -1.0}))
    cfg = ExperimentConfig.from_sources("solve", None, {"model": str(mfile), "c": 5.0, "n": 64})
    model, params = cfg.resolve()
    assert model.c == 5.0 and params.grid.n == 64


def test_out_dir_falls_back_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HJ_OUT_DIR", str(tmp_path / "env"))
    assert main(["flow", "--model", "e3", "--fixed-points"]) == EXIT_OK
    assert (tmp_path / "env" / "report.json").exists()


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    with pytest.raises(UsageError):
        ExperimentConfig("solve", out_dir=str(blocker / "x")).output_dir()


def test_c0_small_grid(tmp_path):
    code, rep = run(tmp_path, "c0", "--model", "e1", "--n", "64", "--iterations", "12", "--check")
    assert code == EXIT_CHECK  # a 12-step bisection cannot reach width 2^-19
    assert rep["c0_lo"] <= 0.0 <= rep["c0_hi"]
    assert rep["checks"]["monotone"] and rep["checks"]["center_within_0.05"]


def test_evolve_below_minimal_solution_diverges(tmp_path):
    code, rep = run(tmp_path, "evolve", "--model", "e1", "--c", "5", "--n", "64", "--init", "below", "--check")
    assert code == EXIT_OK
    assert rep["status"] == "diverged-down"
    hist = np.loadtxt(tmp_path / "out" / "history.csv", delimiter=",", skiprows=1)
    assert hist.shape[1] == 3


def test_oracle_subcommand(tmp_path):
    code, rep = run(tmp_path, "oracle", "--n", "256", "--check", "--emit-svg")
    assert code == EXIT_OK
    assert rep["flagged_nodes"] == 0
    assert (tmp_path / "out" / "solution.svg").exists()


@pytest.mark.slow
def test_c0_e3_default_grid(tmp_path):
    code, rep = run(tmp_path, "c0", "--model", "e3", "--n", "512", "--check")
    assert code == EXIT_OK
    assert rep["c0_lo"] <= 0.0 <= rep["c0_hi"]


@pytest.mark.slow
def test_solve_e3_fine_grid_with_svg(tmp_path):
    code, rep = run(tmp_path, "solve", "--model", "e3", "--c", "0", "--n", "1024", "--emit-svg", "--check")
    assert code == EXIT_OK
    assert rep["oracle_sup_diff"] <= 5e-2
    svg = (tmp_path / "out" / "solution.svg").read_text()
    assert "<polyline" in svg
    assert (tmp_path / "out" / "u_max.csv").exists()
