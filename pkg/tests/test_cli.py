import csv
import json
import subprocess
import sys

import pytest

from ogbmatch.cli import (EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_OK, ConfigError,
                          config_from_dict, main)

from conftest import CONFIGS


def run(cmd, config, out, *extra):
    return main([cmd, "--config", str(CONFIGS / config), "--out", str(out), *extra])


def read_json(path):
    return json.loads(path.read_text())


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("simulate", "pendulum.json", a) == EXIT_OK
    assert run("simulate", "pendulum.json", b) == EXIT_OK
    for name in ("data.csv", "extended.csv", "reference.csv", "simulate.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    with open(a / "data.csv") as fh:
        assert sum(1 for _ in csv.reader(fh)) == 1 + 307
    c = tmp_path / "c"
    assert run("simulate", "pendulum.json", c, "--seed", "5") == EXIT_OK
    assert (a / "data.csv").read_bytes() != (c / "data.csv").read_bytes()


def test_match_pendulum(tmp_path):
    assert run("match", "pendulum.json", tmp_path) == EXIT_OK
    rep = read_json(tmp_path / "match.json")
    assert rep["status"] == "feasible" and rep["rrmse_realized"] < 1e-9
    assert rep["parameter_count"] == 2 and rep["gpe"]["verdict"] == "satisfied"
    assert (tmp_path / "solution.csv").exists()


def test_match_infeasible_exit_code(tmp_path):
    assert run("match", "lti_infeasible.json", tmp_path) == EXIT_INFEASIBLE
    rep = read_json(tmp_path / "match.json")
    assert rep["status"] == "infeasible" and rep["rrmse_realized"] > 0.01


def test_match_four_tank(tmp_path):
    assert run("match", "four_tank.json", tmp_path) == EXIT_OK
    assert read_json(tmp_path / "match.json")["rrmse_realized"] < 1e-8


def test_match_lpv(tmp_path):
    assert run("match", "lpv_siso.json", tmp_path) == EXIT_OK
    assert read_json(tmp_path / "match.json")["rrmse_realized"] < 1e-8


def test_single_length_sweep_equals_match(tmp_path):
    assert run("match", "pendulum.json", tmp_path / "m") == EXIT_OK
    assert run("sweep-length", "pendulum.json", tmp_path / "s", "--lengths", "307") == EXIT_OK
    with open(tmp_path / "s" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and int(rows[0]["T"]) == 307
    assert float(rows[0]["rrmse"]) == read_json(tmp_path / "m" / "match.json")["rrmse_realized"]
    summary = read_json(tmp_path / "s" / "sweep.json")
    assert summary["formula_min_length"] == summary["empirical_min_length"] == 307


def test_min_length_and_rank_check(tmp_path):
    assert run("min-length", "min_length.json", tmp_path) == EXIT_OK
    rep = read_json(tmp_path / "min_length.json")
    assert (rep["ogb"], rep["lti"], rep["difference"]) == (63, 25, 38)
    assert run("rank-check", "pendulum.json", tmp_path) == EXIT_OK
    rank = read_json(tmp_path / "rank.json")
    assert rank["verdict"] == "satisfied" and rank["required"] == 206


def test_structure_four_tank(tmp_path):
    assert run("structure", "four_tank.json", tmp_path) == EXIT_OK
    rep = read_json(tmp_path / "structure.json")
    assert rep["data_length_used"] == 17
    assert rep["active_terms"]["output3"] == sorted(
        ["h(u2)(t-1)", "unl3(t-1)", "y3(t)", "y3(t-1)"])


def test_config_errors(tmp_path):
    assert main(["match", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text('{"plant": "pendulum"}')
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    bad.write_text('{"plant": "pendulum", "seed": 1, "colour": 3}')
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    with pytest.raises(ConfigError):
        config_from_dict({"plant": "boiler", "seed": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"plant": "lti", "seed": -1})


def test_numerical_failure_exit_code(tmp_path):
    cfg = json.loads((CONFIGS / "four_tank.json").read_text())
    cfg["plant_params"]["T_s"] = 1.0
    path = tmp_path / "ft.json"
    path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == EXIT_NUMERICAL


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ogbmatch", "min-length", "--config",
                        str(CONFIGS / "min_length.json"), "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert read_json(tmp_path / "min_length.json")["ogb"] == 63
