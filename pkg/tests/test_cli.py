"""Command line entry points driven through tiny JSON configs."""

import json
import os

import pytest

from burgersfb.cli import main


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def run_json(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


BASE = {
    "domain": {"n": 4},
    "physics": {"nu": 0.1, "c0": 1.0},
    "steady": {"u_inf": "-0.2*x1", "mean": -0.1},
    "initial": {"w0": "sin(pi*x1)*sin(pi*x2) + 0.2*x1"},
    "time": {"k": 0.01, "t_end": 0.1},
}


def test_steady_manufactured(tmp_path, capsys):
    config = write_config(tmp_path, {**BASE, "output": {"dir": str(tmp_path)}})
    payload = run_json(capsys, ["steady", "--config", config])
    assert payload["n"] == 4
    assert payload["newton_iterations"] >= 1
    assert payload["residual_norm"] <= 1e-10
    assert payload["interpolant_gap_l2"] <= 1e-9
    assert payload["smallness"]["satisfied"] is True
    with open(payload["csv"], "r", encoding="ascii") as handle:
        assert handle.readline().rstrip("\n") == "x,y,u"


def test_steady_solve_mode(tmp_path, capsys):
    # Forcing of the shear state; no closed form is given, so no gap field.
    config = write_config(
        tmp_path,
        {
            **BASE,
            "steady": {"mode": "solve", "f_inf": "0.04*x1", "mean": -0.1},
            "output": {"dir": str(tmp_path)},
        },
    )
    payload = run_json(capsys, ["steady", "--config", config])
    assert "interpolant_gap_l2" not in payload
    assert payload["residual_norm"] <= 1e-10
    assert os.path.exists(payload["csv"])


def test_simulate_controlled(tmp_path, capsys):
    config = write_config(tmp_path, BASE)
    payload = run_json(
        capsys, ["simulate", "--config", config, "--output-dir", str(tmp_path)]
    )
    assert payload["lyapunov_monotone"] is True
    assert 0.0 < payload["l2_final"] < payload["h1_final"] * 10
    assert payload["predicted_alpha"] == pytest.approx(0.0125)
    assert payload["fitted_rate"] > 0.0
    with open(payload["csv"], "r", encoding="ascii") as handle:
        header = handle.readline().rstrip("\n")
        assert header == "time,l2,h1semi,lyapunov,control_l2,newton_iters"
        assert len(handle.readlines()) == 11


def test_simulate_uncontrolled(tmp_path, capsys):
    config = write_config(
        tmp_path, {**BASE, "control": {"active_region": "none"}}
    )
    payload = run_json(
        capsys, ["simulate", "--config", config, "--output-dir", str(tmp_path)]
    )
    assert payload["l2_final"] > 0.0
    assert os.path.exists(payload["csv"])


def test_simulate_picard(tmp_path, capsys):
    config = write_config(
        tmp_path, {**BASE, "time": {"k": 0.01, "t_end": 0.1, "nonlinear": "picard"}}
    )
    payload = run_json(
        capsys, ["simulate", "--config", config, "--output-dir", str(tmp_path)]
    )
    assert payload["l2_final"] > 0.0


def test_simulate_dirichlet_segment(tmp_path, capsys):
    config = write_config(
        tmp_path,
        {
            **BASE,
            "domain": {"n": 4, "dirichlet": [[1.0, 0.0], [1.0, 1.0]]},
            "initial": {"w0": "sin(pi*x1)*sin(pi*x2)"},
        },
    )
    payload = run_json(
        capsys, ["simulate", "--config", config, "--output-dir", str(tmp_path)]
    )
    assert payload["lyapunov_monotone"] is True


def test_study_rates(tmp_path, capsys):
    config = write_config(
        tmp_path,
        {**BASE, "study": {"levels": [2, 4], "reference": 8, "t_eval": 0.05}},
    )
    payload = run_json(
        capsys, ["study", "--config", config, "--output-dir", str(tmp_path)]
    )
    assert len(payload["l2_rates"]) == 1
    assert len(payload["h1_rates"]) == 1
    assert len(payload["control_rates"]) == 1
    assert os.path.exists(payload["rates_state"])
    assert os.path.exists(payload["rates_control"])


def test_examples_dispatch(tmp_path, capsys, monkeypatch):
    calls = []

    class Fake:
        paths = {"marker": "here"}

    monkeypatch.setattr(
        "burgersfb.cli.run_example1", lambda out: calls.append(("1", out)) or Fake()
    )
    monkeypatch.setattr(
        "burgersfb.cli.run_example2", lambda out: calls.append(("2", out)) or Fake()
    )
    payload = run_json(
        capsys, ["examples", "--which", "1", "--output-dir", str(tmp_path)]
    )
    assert payload == {"example1": {"marker": "here"}}
    assert calls == [("1", str(tmp_path))]
    payload = run_json(
        capsys, ["examples", "--which", "all", "--output-dir", str(tmp_path)]
    )
    assert set(payload) == {"example1", "example2"}
    assert calls[1:] == [("1", str(tmp_path)), ("2", str(tmp_path))]


def test_rejects_malformed_configs(tmp_path):
    missing_w0 = write_config(tmp_path, {**BASE, "initial": {}}, "a.json")
    with pytest.raises(ValueError):
        main(["simulate", "--config", missing_w0])
    bad_region = write_config(
        tmp_path, {**BASE, "control": {"active_region": "everywhere"}}, "b.json"
    )
    with pytest.raises(ValueError):
        main(["simulate", "--config", bad_region])
    bad_mode = write_config(
        tmp_path, {**BASE, "steady": {"mode": "lookup", "u_inf": "x1"}}, "c.json"
    )
    with pytest.raises(ValueError):
        main(["steady", "--config", bad_mode])
    no_forcing = write_config(
        tmp_path, {**BASE, "steady": {"mode": "solve", "mean": -0.1}}, "d.json"
    )
    with pytest.raises(ValueError):
        main(["steady", "--config", no_forcing])


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
