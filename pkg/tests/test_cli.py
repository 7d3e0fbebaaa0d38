import json

import numpy as np
import pytest

from hksim.cli import main


def write_config(path, text):
    path.write_text(text)
    return str(path)


BASIC_CFG = """\
initial:
  values: [1.0, 0.0]
policy: sliding
solver:
  t_max: 20.0
output:
  prefix: run
"""


def test_simulate_writes_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.yaml", BASIC_CFG)
    code = main(["simulate", "--config", cfg, "--out", str(tmp_path)])
    assert code == 0
    csv_lines = (tmp_path / "run_trajectory.csv").read_text().splitlines()
    assert csv_lines[0] == "t,x1,x2"
    final = [float(v) for v in csv_lines[-1].split(",")[1:]]
    assert np.allclose(final, [0.5, 0.5], atol=1e-6)
    events = [json.loads(l) for l in (tmp_path / "run_events.jsonl").read_text().splitlines()]
    assert events[0]["kind"] == "edge_activate" and events[0]["i"] == 1 and events[0]["j"] == 2
    report = json.loads((tmp_path / "run_invariants.json").read_text())
    assert set(report) == {
        "max_average_drift",
        "max_hull_expansion",
        "order_violations",
        "max_lyapunov_increase",
        "component_count_decreases",
    }


def test_simulate_constant_at_strong_equilibrium(tmp_path):
    cfg = write_config(
        tmp_path / "cfg.yaml",
        "initial:\n  values: [0.0, 2.5]\n",
    )
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "run_trajectory.csv").read_text().splitlines()
    assert len(lines) == 2  # header + the single converged sample at t=0
    assert [float(v) for v in lines[1].split(",")] == [0.0, 0.0, 2.5]


def test_simulate_seeded_random_determinism(tmp_path):
    cfg_text = """\
n: 20
initial:
  random: {seed: 7, low: 0.0, high: 10.0}
solver:
  t_max: 30.0
"""
    cfg = write_config(tmp_path / "cfg.yaml", cfg_text)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(out_a)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(out_b)]) == 0
    assert (out_a / "run_trajectory.csv").read_bytes() == (out_b / "run_trajectory.csv").read_bytes()


def test_simulate_rejects_unknown_key(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.yaml", BASIC_CFG + "solverr: {}\n")
    assert main(["simulate", "--config", cfg]) == 64
    assert "solverr" in capsys.readouterr().err


def test_simulate_rejects_bad_solver_field(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.yaml", "initial:\n  values: [0.0, 2.0]\nsolver:\n  dt_mx: 0.1\n")
    assert main(["simulate", "--config", cfg]) == 64
    assert "solver.dt_mx" in capsys.readouterr().err


def test_simulate_requires_exactly_one_initial(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "bad.yaml",
        "n: 3\ninitial:\n  values: [0.0, 1.0, 2.0]\n  random: {seed: 1}\n",
    )
    assert main(["simulate", "--config", cfg]) == 64
    assert "initial" in capsys.readouterr().err


def test_simulate_policy_env_override(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "cfg.yaml", BASIC_CFG)
    monkeypatch.setenv("HKSIM_POLICY", "proper")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "run_trajectory.csv").read_text().splitlines()
    assert len(lines) == 2  # proper keeps the weak equilibrium constant
    assert [float(v) for v in lines[1].split(",")[1:]] == [1.0, 0.0]


def test_robustness_exit_codes(tmp_path, capsys):
    assert main(["robustness", "--clusters", "3@0,3@2.5"]) == 0
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert payload["overall"] is True

    assert main(["robustness", "--clusters", "1@0,3@1.5"]) == 3
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert payload["overall"] is False and payload["pairs"][0]["nA"] == 1

    assert main(["robustness", "--values", "0,0.4"]) == 1
    assert "residual" in capsys.readouterr().err


def test_robustness_single_cluster(capsys):
    assert main(["robustness", "--clusters", "5@1.3"]) == 0
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert payload["pairs"] == [] and payload["overall"] is True


def test_robustness_writes_file(tmp_path, capsys):
    assert main(["robustness", "--clusters", "2@0,2@2.4", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    payload = json.loads((tmp_path / "robustness.json").read_text())
    assert payload["overall"] is True


def test_verify_frontier(tmp_path, capsys):
    code = main(
        ["verify", "--na", "1", "--nb", "2", "--gaps", "1.9,2.1", "--grid-step", "0.01", "--out", str(tmp_path)]
    )
    assert code == 0
    capsys.readouterr()
    lines = (tmp_path / "verify_1_2.csv").read_text().splitlines()
    assert lines[0] == "gap,x0,merged"
    assert "# threshold,2" in lines
    assert "# frontier_consistent,true" in lines
    rows = [l.split(",") for l in lines[1:] if not l.startswith("#")]
    merged_19 = any(r[2] == "1" for r in rows if float(r[0]) == 1.9)
    merged_21 = any(r[2] == "1" for r in rows if float(r[0]) == 2.1)
    assert merged_19 and not merged_21


def test_verify_budget_zero(tmp_path, capsys):
    code = main(["verify", "--na", "2", "--nb", "2", "--gaps", "1.95", "--budget", "0", "--out", str(tmp_path)])
    assert code == 0
    capsys.readouterr()
    lines = (tmp_path / "verify_2_2.csv").read_text().splitlines()
    assert lines == ["gap,x0,merged", "# no data"]


def test_verify_budget_caps_cells(tmp_path, capsys):
    main(["verify", "--na", "1", "--nb", "2", "--gaps", "1.9", "--grid-step", "0.01", "--budget", "5", "--out", str(tmp_path)])
    capsys.readouterr()
    lines = [l for l in (tmp_path / "verify_1_2.csv").read_text().splitlines()[1:] if not l.startswith("#")]
    assert len(lines) == 5


def test_region_outputs(tmp_path, capsys):
    code = main(["region", "--na", "1", "--nb", "2", "--resolution", "7", "--out", str(tmp_path)])
    assert code == 0
    capsys.readouterr()
    curve = (tmp_path / "region_curve_1_2.csv").read_text().splitlines()
    assert curve == ["t,x,y", "0,1,1"]  # degenerate single-point curve
    grid = [l.split(",") for l in (tmp_path / "region_grid_1_2.csv").read_text().splitlines()[1:]]
    for x, y, inside in grid:
        if float(x) >= 1.0 or float(y) >= 1.0:
            assert inside == "0"


def test_region_curve_endpoint(tmp_path, capsys):
    main(["region", "--na", "1", "--nb", "3", "--resolution", "5", "--out", str(tmp_path)])
    capsys.readouterr()
    curve = (tmp_path / "region_curve_1_3.csv").read_text().splitlines()
    first = [float(v) for v in curve[1].split(",")]
    last = [float(v) for v in curve[-1].split(",")]
    assert abs(first[2] - 1.0) <= 1e-9  # y = 1 at t = t*
    assert abs(last[1] - 1.0) <= 1e-12 and abs(last[2] - 2.0 / 3.0) <= 1e-12


def test_check_equilibrium(capsys):
    assert main(["check-equilibrium", "--values", "1,0"]) == 0
    payload = json.loads(capsys.readouterr().out.strip())
    assert payload == {"residual": 0.0, "weak": True, "strong": False}
    assert main(["check-equilibrium", "--values", "0,0.4"]) == 1


def test_check_equilibrium_requires_one_input(capsys):
    assert main(["check-equilibrium"]) == 64
