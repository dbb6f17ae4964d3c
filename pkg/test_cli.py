#!/usr/bin/env python3
"""
End-to-end tests for the command line: reports on stdout, JSON errors on
stderr and the exit status of every failure class
"""

import json
from pathlib import Path

import pytest

import main


def run_cli(tmp_path, *args):
    return main.main([*args, "--output-dir", str(tmp_path)])


def error_of(capsys):
    """Last JSON line on stderr (log lines precede it)"""
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    assert lines, "no JSON error on stderr"
    return json.loads(lines[-1])


def build_bundle(tmp_path, capsys, a, b, n, name="solution.json"):
    out = tmp_path / name
    assert run_cli(tmp_path, "build", "--a", a, "--b", b, "--n", str(n), "--out", str(out)) == 0
    capsys.readouterr()
    return out


def test_build_then_verify(tmp_path, capsys):
    assert run_cli(tmp_path, "build", "--a", "1/2", "--b", "x1^2 - x2^2") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n"] == 2
    assert report["verify"]["verdict"] == "exact-identity"
    bundle = Path(report["bundle"])
    assert bundle.exists()
    assert (tmp_path / "build_report.json").exists()

    assert run_cli(tmp_path, "verify", str(bundle)) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["kind"] == "bundle"
    assert report["ellipticity"]["elliptic"]
    assert "seed" in report["config"]


def test_verify_polynomial(tmp_path, capsys):
    assert run_cli(tmp_path, "verify", "--u", "t^2/2 + t*x1 + x1^2") == 0
    assert json.loads(capsys.readouterr().out)["verify"]["verdict"] == "exact-identity"

    assert run_cli(tmp_path, "verify", "--u", "t^2 + x1^2") == 2
    error = error_of(capsys)
    assert error["error"] == "constraint-violation"
    assert error["residual"] == "3"


def test_invalid_parameter_exits_one(tmp_path, capsys):
    assert run_cli(tmp_path, "build", "--a=-1", "--b", "x1") == 1
    assert error_of(capsys)["error"] == "invalid-input"


def test_unknown_command_exits_one(tmp_path, capsys):
    assert main.main(["frobnicate"]) == 1
    assert error_of(capsys)["error"] == "invalid-input"


def test_missing_verify_input(tmp_path, capsys):
    assert run_cli(tmp_path, "verify") == 1
    assert "--u" in error_of(capsys)["message"]


def test_tampered_bundle_is_rejected(tmp_path, capsys):
    bundle = build_bundle(tmp_path, capsys, "1/2", "x1", 2)
    data = json.loads(bundle.read_text())
    data["a"] = "3/2"
    bundle.write_text(json.dumps(data))
    assert run_cli(tmp_path, "verify", str(bundle)) == 2
    assert error_of(capsys)["error"] == "constraint-violation"


def test_transform_and_liouville(tmp_path, capsys):
    bundle = build_bundle(tmp_path, capsys, "2", "x1", 1)
    code = run_cli(tmp_path, "transform", str(bundle), "--numeric-shape", "33x33", "--box", "0", "1")
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["symbolic"]["liouville"]["verdict"] == "consistent-with-constant"
    assert Path(report["numeric"]["theta_file"]).exists()

    assert run_cli(tmp_path, "liouville", str(bundle)) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["liouville"]["verdict"] == "consistent-with-constant"
    assert [v["verdict"] for v in report["completeness"]] == ["diverging", "diverging"]


def test_complexify_family(tmp_path, capsys):
    assert run_cli(tmp_path, "complexify", "--a", "1", "--b", "wb", "--points", "3") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["mode"] == "family"
    assert report["det_residual"] == "0"
    assert len(report["samples"]) == 3


def test_complexify_bridge(tmp_path, capsys):
    bundle = build_bundle(tmp_path, capsys, "1/2", "x1^2 - x2^2", 2)
    assert run_cli(tmp_path, "complexify", str(bundle), "--set", "bridge_samples=20") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["mode"] == "bridge"
    assert report["bridge"]["passed"]

    flat = build_bundle(tmp_path, capsys, "1/2", "x1", 1, name="flat.json")
    assert run_cli(tmp_path, "complexify", str(flat)) == 2
    assert error_of(capsys)["error"] == "unsupported"


def test_solve_writes_grid(tmp_path, capsys):
    code = run_cli(tmp_path, "solve", "--boundary", "t^2/2 + t*x1 + x1^2", "--shape", "17x17", "--box", "0", "1")
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["solve"]["status"] == "converged"
    assert Path(report["grid_file"]).exists()

    assert run_cli(tmp_path, "verify", report["grid_file"]) == 0
    assert json.loads(capsys.readouterr().out)["residual"]["max_abs"] <= 1e-6


def test_solve_failure_exits_three(tmp_path, capsys):
    code = run_cli(tmp_path, "solve", "--boundary", "t^2/2 + t*x1 + x1^2 + t^3/10", "--shape", "17x17",
                   "--box", "0", "1", "--set", "max_newton_iterations=1")
    assert code == 3
    error = error_of(capsys)
    assert error["error"] == "solver-failure"
    assert error["status"] != "converged"
    assert (tmp_path / "solve_report.json").exists()


def test_solver_grid_feeds_transform_and_liouville(tmp_path, capsys):
    code = run_cli(tmp_path, "solve", "--boundary", "2*t^2 + t*x1 + x1^2/4", "--shape", "33x33", "--box", "0", "1")
    assert code == 0
    grid_file = json.loads(capsys.readouterr().out)["grid_file"]

    assert run_cli(tmp_path, "transform", grid_file) == 0
    numeric = json.loads(capsys.readouterr().out)["numeric"]
    assert numeric["liouville"]["verdict"] == "consistent-with-constant"
    assert Path(numeric["theta_file"]).exists()

    assert run_cli(tmp_path, "liouville", grid_file) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["liouville"]["verdict"] == "consistent-with-constant"
    assert "completeness" in report


def test_nested_domains_csv_on_stdout(tmp_path, capsys):
    code = run_cli(tmp_path, "probe31", "--a", "1/2", "--b", "x1", "--domains", "1", "2",
                   "--set", "probe_points_per_unit=8", "--format", "csv")
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "domain_size,h,osc_u_tt,status"
    rows = [line.split(",") for line in lines[1:]]
    assert [float(row[0]) for row in rows] == [1.0, 2.0]
    for size, h, osc, status in rows:
        assert status == "converged"
        assert float(osc) <= 10 * float(h) ** 2
    assert (tmp_path / "probe31.csv").exists()


def test_partial_nested_domain_report_exits_three(tmp_path, capsys):
    code = run_cli(tmp_path, "probe31", "--a", "1/2", "--b", "x1", "--domains", "1", "2",
                   "--perturbation", "t^3/10", "--set", "probe_points_per_unit=8",
                   "--set", "max_newton_iterations=1")
    assert code == 3
    assert error_of(capsys)["error"] == "solver-failure"
    report = json.loads((tmp_path / "probe31_report.json").read_text())
    assert not report["complete"]
    assert len(report["rows"]) == 2


def test_effective_config_is_saved(tmp_path, capsys):
    assert run_cli(tmp_path, "catalog", "--n", "1", "--degree", "1", "--set", "newton_tolerance=1e-9") == 0
    saved = json.loads((tmp_path / main.EFFECTIVE_CONFIG_FILE).read_text())
    assert saved["newton_tolerance"] == 1e-9
    assert saved["initial_margin_fraction"] == 0.25


@pytest.mark.parametrize("args", [["--degree", "2"], ["--degree", "2", "--format", "csv"]])
def test_catalog(tmp_path, capsys, args):
    assert run_cli(tmp_path, "catalog", "--n", "2", *args) == 0
    out = capsys.readouterr().out
    if "csv" in args:
        lines = out.strip().splitlines()
        assert lines[0] == "degree,dimension,rank,basis"
        assert [line.split(",")[1] for line in lines[1:]] == ["1", "2", "2"]
    else:
        levels = json.loads(out)["levels"]
        assert [level["dimension"] for level in levels] == [1, 2, 2]
        assert all(level["rank"] == level["dimension"] for level in levels)


def test_log_file_lands_in_output_dir(tmp_path, capsys):
    assert run_cli(tmp_path, "catalog", "--n", "1", "--degree", "1", "--log-file", "run.log") == 0
    assert (tmp_path / "run.log").exists()
