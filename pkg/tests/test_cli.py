import json

import pytest

from dmcc.cli import main

SMALL = ["--preset", "static", "--set", "constraints.N=20"]


@pytest.fixture(scope="module")
def plan_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("plan")
    assert main(["plan", *SMALL, "--out", str(out)]) == 0
    return out


def test_plan_outputs(plan_dir):
    names = {p.name for p in plan_dir.iterdir()}
    assert {"plan.csv", "plan.json", "plan.manifest.json"} <= names
    assert json.loads((plan_dir / "plan.json").read_text())["report"]["status"] == "Optimal"


def test_simulate_ok(plan_dir, capsys):
    assert main(["simulate", str(plan_dir / "plan.csv")]) == 0
    assert "ok" in capsys.readouterr().out


def test_simulate_rejects_tampered_inputs(plan_dir, tmp_path):
    lines = (plan_dir / "plan.csv").read_text().splitlines()
    row = lines[10].split(",")
    row[8] = repr(float(row[8]) + 0.5)
    lines[10] = ",".join(row)
    (tmp_path / "plan.csv").write_text("\n".join(lines) + "\n")
    (tmp_path / "plan.json").write_text((plan_dir / "plan.json").read_text())
    assert main(["simulate", str(tmp_path / "plan.csv")]) == 2


@pytest.mark.parametrize("fig", ["fig5", "fig6", "fig7"])
def test_plot_data(plan_dir, tmp_path, fig):
    assert main(["plot-data", str(plan_dir / "plan.csv"), "--figure", fig, "--out", str(tmp_path)]) == 0
    assert (tmp_path / f"{fig}_windows.csv").exists()


@pytest.mark.parametrize("argv", [
    [],
    ["plan"],
    ["plan", "--preset", "nope"],
    ["plan", "--preset", "static", "--set", "constraints.kappa_init=0"],
    ["plan", "--preset", "static", "--set", "bogus=1"],
    ["plan", "/nonexistent/scenario.json"],
    ["plan", "--preset", "race-1"],
    ["simulate", "/nonexistent/plan.csv"],
    ["race", "--mode", "euler"],
    ["race", "--sweep", "a-b"],
    ["track"],
    ["track", "--hover", "--disturbance", "1,2"],
    ["plot-data", "x.csv", "--figure", "fig9"],
    ["frobnicate"],
])
def test_invalid_input_exit_code(argv, tmp_path, capsys):
    assert main([*argv, *(["--out", str(tmp_path)] if argv and argv[0] in ("plan", "race") else [])]) == 1
    assert capsys.readouterr().err


def test_validation_messages_name_fields(capsys):
    main(["plan", "--preset", "static", "--set", "constraints.kappa_init=0"])
    assert "constraints.kappa_init:" in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path):
    assert main(["plan", *SMALL, "--set", "solver.max_iter=3", "--out", str(tmp_path)]) == 2
    # the partial result is still written for inspection
    assert (tmp_path / "plan.csv").exists()


def test_race_and_track(tmp_path):
    assert main(["race", "--waypoints", "1", "--set", "race.N=30", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "race_del.csv").read_text().startswith("t [s],x [m]")
    assert main(["track", "--hover", "--duration", "0.2", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "track_gpr_off.json").read_text())["degraded_steps"] == 0


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
