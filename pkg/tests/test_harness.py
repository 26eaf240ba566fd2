import csv
import json

import numpy as np
import pytest

from ddstmpc.harness import (
    ConfigError,
    ExperimentConfig,
    load_config,
    reference_config,
    run_experiment,
)
from ddstmpc.harness.cli import main
from ddstmpc.harness.experiment import data_rng, run_loop, terminal_seed, write_artifacts
from ddstmpc.harness.io import dumps_canonical, hpoly_vertices_2d, write_plot_csv
from ddstmpc.harness.plant import collect_trajectories, sample_disturbance, simulate_plant
from ddstmpc.harness.config import TerminalConfig
from ddstmpc.rosc import RoscFamily
from ddstmpc.setgeom import HPolytope, polygon_vertices, zonotope_contains_point
from ddstmpc.sysid import assemble_data, check_rank

from conftest import A_TRUE, B_TRUE

CFG = reference_config(0)


# ---------------------------------------------------------------- plant

def test_simulate_plant_example():
    x = simulate_plant(CFG.plant, np.array([1.0, 0.0]), np.array([0.0]), np.zeros(2))
    np.testing.assert_allclose(x, [0.7969, 0.1798])
    x = simulate_plant(CFG.plant, np.zeros(2), np.array([1.0]), np.array([0.001, -0.002]))
    np.testing.assert_allclose(x, [0.1281, 0.0112])


def test_disturbance_modes(rng):
    W = CFG.plant.W
    for mode in ("uniform", "vertex"):
        w = sample_disturbance(W, rng, 100, mode)
        assert w.shape == (100, 2) and np.all(np.abs(w) <= 0.005 + 1e-15)
    assert np.all(np.abs(sample_disturbance(W, rng, 50, "vertex")) == 0.005)
    assert np.all(sample_disturbance(W, rng, 5, "zero") == 0)
    with pytest.raises(ValueError):
        sample_disturbance(W, rng, 5, "gaussian")


def test_collect_reference_sizes():
    trajs = collect_trajectories(CFG.plant, 2, 10, data_rng(0))
    D = assemble_data(trajs)
    assert D.T == 20 and len(trajs) == 2
    assert all(t.states.shape == (11, 2) and t.inputs.shape == (10, 1) for t in trajs)
    for t in trajs:
        assert np.all(np.abs(t.inputs) <= 3) and np.all(np.abs(t.states) <= 10)
        w = t.states[1:] - t.states[:-1] @ A_TRUE.T - t.inputs @ B_TRUE.T
        assert np.all(np.abs(w) <= 0.005 + 1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_collect_rank(seed):
    assert check_rank(assemble_data(collect_trajectories(CFG.plant, 2, 10, data_rng(seed))))


def test_collect_bad_sizes():
    with pytest.raises(ValueError):
        collect_trajectories(CFG.plant, 0, 10, data_rng(0))


# ---------------------------------------------------------------- config

def test_config_roundtrip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(CFG.to_dict()))
    back = load_config(path)
    assert back.to_dict() == CFG.to_dict()
    assert CFG.with_seed(7).seed == 7 and CFG.with_seed(7).offline == CFG.offline


@pytest.mark.parametrize("edit", [
    lambda d: d.update(schema_version=99),
    lambda d: d["offline"].update(template_policy="random"),
    lambda d: d["offline"].update(levels=0),
    lambda d: d["online"].update(R=[[-1.0]]),
    lambda d: d["online"].update(K=[[-5.0, 0.0]]),
    lambda d: d["plant"].update(A=[[1.0, 0.0]]),
    lambda d: d["offline"]["terminal"].update(kind="disc"),
])
def test_config_errors(edit):
    raw = json.loads(json.dumps(CFG.to_dict()))
    edit(raw)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


# ---------------------------------------------------------------- io

def test_canonical_json():
    text = dumps_canonical({"b": [1.0, 2, 0.1], "a": {"z": float("inf"), "y": None, "x": True}})
    assert text.index('"a"') < text.index('"b"')
    assert "[1.0, 2, 0.10000000000000001]" in text
    assert '"inf"' in text
    assert json.loads(text)["a"]["x"] is True
    assert dumps_canonical(np.float64(3.0)) == "3.0\n"
    with pytest.raises(TypeError):
        dumps_canonical({"a": object()})


def test_hpoly_vertices_2d():
    verts = hpoly_vertices_2d(HPolytope.box([-1.0, 0.0], [2.0, 1.0]))
    assert sorted(map(tuple, np.round(verts, 12))) == [(-1, 0), (-1, 1), (2, 0), (2, 1)]
    with pytest.raises(ValueError):
        hpoly_vertices_2d(HPolytope.box([0.0, 0.0], [0.0, 1.0]))


def test_plot_csv(reference_run, tmp_path):
    path = tmp_path / "plot.csv"
    loops = {k: v.states for k, v in reference_run.loops.items()}
    write_plot_csv(path, reference_run.family, reference_run.oracle, loops)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    series = {r["series"] for r in rows}
    assert series == {"level", "oracle_level", "dstmpc", "stmpc"}
    fam = reference_run.family
    for r in rows:
        if r["series"] == "level":
            x = np.array([float(r["x_1"]), float(r["x_2"])])
            assert zonotope_contains_point(fam.projected(int(r["index"])), x, 1e-7)
    levels = {int(r["index"]) for r in rows if r["series"] == "level"}
    assert levels == set(range(fam.N + 1))


# ---------------------------------------------------------------- experiment

def test_terminal_seed_kinds():
    from ddstmpc.sysid import compute_model_set, extract_vertex_models
    trajs = collect_trajectories(CFG.plant, 2, 10, data_rng(0))
    V = extract_vertex_models(compute_model_set(assemble_data(trajs), CFG.plant.W), 8)
    ell = terminal_seed(V, TerminalConfig("ellipse", 0.6, 6))
    assert ell.num_generators == 6
    radius = np.linalg.norm(polygon_vertices(ell) - ell.center, axis=1).max()
    assert radius == pytest.approx(0.6, rel=1e-9)
    box = terminal_seed(V, TerminalConfig("box", 0.1, 6))
    np.testing.assert_allclose(box.generators, 0.1 * np.eye(2))


def test_run_loop_stops_on_error():
    def policy(x):
        from ddstmpc.controller import OutsideFamilyError
        raise OutsideFamilyError("nope")
    loop = run_loop([0.0, 0.0], policy, CFG.plant, np.zeros((5, 2)))
    assert loop.error.startswith("step 0") and loop.inputs == [] and loop.reached_at is None


def test_reference_report(reference_run):
    rep = reference_run.report
    assert rep["identification"]["samples"] == 20
    assert rep["identification"]["generators"] == 40
    assert rep["identification"]["reduced_generators"] == 8
    assert rep["identification"]["vertex_models"] == 256
    assert rep["identification"]["true_model_contained"]
    assert rep["family"]["levels"] == 15 and rep["family"]["terminal_in_level1"]
    assert rep["closed_loop"]["dstmpc"]["error"] is None
    assert rep["oracle"]["levels"] == 15


def test_artifacts_deterministic(reference_run, tmp_path):
    write_artifacts(reference_run, tmp_path / "a")
    again = run_experiment(CFG, out_dir=tmp_path / "b", compare=True, audits=True)
    for name in ("report.json", "family.json", "oracle.json", "plot.csv", "trajectories.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    assert RoscFamily.from_dict(json.loads((tmp_path / "a" / "family.json").read_text())).N == again.family.N


def test_pipeline_failure_is_recorded(tmp_path):
    raw = CFG.to_dict()
    raw["offline"]["terminal"]["kind"] = "box"
    raw["offline"]["terminal"]["scale"] = 0.1
    result = run_experiment(ExperimentConfig.from_dict(raw), out_dir=tmp_path, compare=False, audits=False)
    assert not result.ok
    assert result.error["stage"] == "terminal_check"
    assert json.loads((tmp_path / "report.json").read_text())["error"]["stage"] == "terminal_check"


# ---------------------------------------------------------------- CLI

def test_cli_usage_errors(tmp_path, capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["offline", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["simulate", "--out", str(tmp_path), "--family", str(tmp_path / "missing.json")]) == 2


def test_cli_collect_identify_offline_simulate(tmp_path):
    assert main(["collect", "--out", str(tmp_path)]) == 0
    data = tmp_path / "trajectories.csv"
    assert data.exists()
    assert main(["identify", "--out", str(tmp_path), "--data", str(data)]) == 0
    ms = json.loads((tmp_path / "model_set.json").read_text())
    assert ms["vertex_models"] == 256 and len(ms["generators"]) == 40
    assert main(["offline", "--out", str(tmp_path), "--data", str(data)]) == 0
    fam = json.loads((tmp_path / "family.json").read_text())
    assert len(fam["levels"]) == 15
    assert main(["simulate", "--out", str(tmp_path), "--family", str(tmp_path / "family.json")]) == 0
    sim = json.loads((tmp_path / "simulate.json").read_text())
    assert sim["reached_at"] is not None and sim["state_ok"] and sim["input_ok"]


@pytest.mark.slow
def test_cli_audit(tmp_path, capsys):
    assert main(["audit", "--out", str(tmp_path), "--runs", "5"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS closed_loop" in out
    audit = json.loads((tmp_path / "audit.json").read_text())
    assert audit["closed_loop"]["summary"]["runs"] == 5
