"""End-to-end pipeline: collect, identify, compute the family, run both controllers, audit."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import linalg as sla

from .. import controller as ctl
from ..rosc import RoscFamily, compute_family, check_terminal_feasibility, model_based_family
from ..setgeom import (
    HPolytope,
    VertexModels,
    Zonotope,
    contains_point,
    polygon_vertices,
    zonotope_gauge,
    zonotope_in_hpoly,
    zonotope_to_hpoly,
)
from ..sysid import (
    assemble_data,
    compute_model_set,
    extract_vertex_models,
    reduced_model_set,
    write_trajectories_csv,
)
from .config import ExperimentConfig, TerminalConfig
from .io import write_json, write_plot_csv
from .plant import collect_trajectories, sample_disturbance, simulate_plant

logger = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-7


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


def data_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0])


def disturbance_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.default_rng([seed, run + 1])


# ---------------------------------------------------------------- terminal seed

def terminal_seed(V: VertexModels, cfg: TerminalConfig) -> Zonotope:
    """Terminal seed zonotope centred at the origin.

    ``box``      axis-aligned box of half-width ``scale``
    ``ellipse``  polygonal zonotope (``generators`` directions) inscribed in a
                 Lyapunov level set of the LQR loop of the mean vertex model,
                 scaled so that its farthest point is at distance ``scale``
    """
    n, m = V.state_dim, V.input_dim
    if cfg.kind == "box":
        return Zonotope(np.zeros(n), cfg.scale * np.eye(n))
    mean = V.matrices.mean(axis=0)
    A, B = mean[:, :n], mean[:, n:]
    P = sla.solve_discrete_are(A, B, np.eye(n), np.eye(m))
    K = np.linalg.solve(np.eye(m) + B.T @ P @ B, B.T @ P @ A)
    Acl = A - B @ K
    S = sla.solve_discrete_lyapunov(Acl.T, np.eye(n))  # Acl' S Acl - S = -I
    L = np.linalg.cholesky(np.linalg.inv(S))  # ellipse {L z : |z| <= 1}
    if n == 2:
        theta = np.pi * np.arange(cfg.generators) / cfg.generators
        G = L @ np.vstack([np.cos(theta), np.sin(theta)])
        radius = np.linalg.norm(polygon_vertices(Zonotope(np.zeros(2), G)), axis=1).max()
    else:
        G = L
        radius = np.abs(G).sum(axis=1).max() * np.sqrt(n)
    return Zonotope(np.zeros(n), G * (cfg.scale / radius))


# ---------------------------------------------------------------- closed loop

@dataclass
class LoopResult:
    states: list
    inputs: list
    indices: list
    reached_at: Optional[int]
    error: Optional[str] = None

    @property
    def j0(self) -> Optional[int]:
        return self.indices[0] if self.indices else None

    def to_dict(self) -> dict:
        return {
            "states": [np.asarray(x).tolist() for x in self.states],
            "inputs": [np.asarray(u).tolist() for u in self.inputs],
            "indices": [int(j) for j in self.indices],
            "reached_at": self.reached_at,
            "j0": self.j0,
            "error": self.error,
        }


def run_loop(x0, policy, plant, noise) -> LoopResult:
    """Apply ``policy(x) -> (u, j)`` for ``len(noise)`` steps."""
    x = np.asarray(x0, dtype=float)
    states, inputs, indices = [x], [], []
    reached = None
    error = None
    for k, w in enumerate(noise):
        try:
            u, j = policy(x)
        except (ctl.OutsideFamilyError, ctl.InfeasibleStepError) as err:
            error = f"step {k}: {err}"
            break
        u = np.asarray(u, dtype=float).reshape(plant.input_dim)
        if j == 0 and reached is None:
            reached = k
        inputs.append(u)
        indices.append(int(j))
        x = simulate_plant(plant, x, u, w)
        states.append(x)
    return LoopResult(states, inputs, indices, reached, error)


def loop_checks(loop: LoopResult, plant) -> dict:
    """Constraint satisfaction, index descent and terminal invariance of one run."""
    x_viol = max((float(np.max(plant.X.C @ x - plant.X.d)) for x in loop.states), default=-np.inf)
    u_viol = max((float(np.max(plant.U.C @ u - plant.U.d)) for u in loop.inputs), default=-np.inf)
    idx = loop.indices
    descent = True
    for k in range(1, len(idx)):
        if idx[k - 1] > 0 and idx[k] > idx[k - 1] - 1:
            descent = False
    reached = loop.reached_at
    stays = reached is not None and all(j == 0 for j in idx[reached:])
    return {
        "reached_at": reached,
        "j0": loop.j0,
        "within_j0": reached is not None and loop.j0 is not None and reached <= loop.j0,
        "index_descent": descent,
        "terminal_invariant": stays,
        "state_ok": x_viol <= CONSTRAINT_TOL,
        "input_ok": u_viol <= CONSTRAINT_TOL,
        "error": loop.error,
    }


# ---------------------------------------------------------------- audits

def audit_inner_soundness(family: RoscFamily, rng, samples: int = 1000) -> list:
    """Worst row violation of the exact polytope over sampled inner-zonotope points, per level."""
    out = []
    for level in family.levels:
        pts = level.inner.sample(rng, samples)
        out.append(float(np.max(pts @ level.hpoly.C.T - level.hpoly.d)))
    return out


def audit_one_step(family: RoscFamily, V: VertexModels, W: Zonotope, rng, pairs: int = 200, noises: int = 20) -> list:
    """Worst violation of level ``j - 1`` by successors of sampled ``(x, u)`` in level ``j``."""
    n = V.state_dim
    out = []
    for level in family.levels:
        target = zonotope_to_hpoly(family.projected(level.index - 1))
        z = level.inner.sample(rng, pairs)
        w = sample_disturbance(W, rng, noises)
        nominal = np.einsum("kij,pj->kpi", V.matrices, z)  # (models, pairs, n)
        succ = nominal[:, :, None, :] + w[None, None, :, :]
        viol = succ.reshape(-1, n) @ target.C.T - target.d
        out.append(float(viol.max()))
    return out


def audit_dominance(family: RoscFamily, oracle, tol: float = 1e-7) -> list:
    limit = min(family.N, len(oracle) - 1)
    return [bool(zonotope_in_hpoly(family.projected(j), oracle[j], tol)) for j in range(1, limit + 1)]


def audit_growth(family: RoscFamily) -> list:
    """Whether each level still contains the terminal seed."""
    return [bool(zonotope_in_hpoly(family.terminal, zonotope_to_hpoly(lvl.projected), 1e-9)) for lvl in family.levels]


# ---------------------------------------------------------------- pipeline

@dataclass
class ExperimentReport:
    report: dict
    family: Optional[RoscFamily] = None
    oracle: Optional[list] = None
    vertex_models: Optional[VertexModels] = None
    trajectories: Optional[list] = None
    loops: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    @property
    def error(self) -> Optional[dict]:
        return self.report.get("error")

    @property
    def ok(self) -> bool:
        return self.error is None


class _Stages:
    def __init__(self, report: dict, timing: dict):
        self.report, self.timing = report, timing

    def run(self, name, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except Exception as err:  # recorded with the stage name, re-raised for the caller
            self.report["error"] = {"stage": name, "message": f"{type(err).__name__}: {err}"}
            raise PipelineError(name, err) from err
        finally:
            self.timing[name] = time.perf_counter() - start


def build_controller(cfg: ExperimentConfig, family: RoscFamily) -> ctl.ControllerState:
    on = cfg.online
    return ctl.ControllerState(family=family, R=np.asarray(on.R, dtype=float),
                               terminal_mode=on.terminal_mode, K=on.K, U=cfg.plant.U)


def run_experiment(cfg: ExperimentConfig, out_dir=None, compare: Optional[bool] = None,
                   audits: bool = True) -> ExperimentReport:
    """Full pipeline for one seed; writes artifacts to ``out_dir`` when given.

    Stage failures are recorded in ``report["error"]`` and the partial report is
    still written; inspect ``result.ok``.
    """
    compare = cfg.audit.compare if compare is None else compare
    plant = cfg.plant
    report = {"config": cfg.to_dict(), "seed": cfg.seed, "error": None}
    result = ExperimentReport(report)
    stages = _Stages(report, result.timing)
    try:
        _pipeline(cfg, plant, compare, audits, stages, result)
    except PipelineError as err:
        logger.warning("%s", err)
    if out_dir is not None:
        write_artifacts(result, out_dir)
    return result


def _pipeline(cfg, plant, compare, audits, stages, result):
    report = result.report
    rng = data_rng(cfg.seed)
    trajs = stages.run("collect", collect_trajectories, plant, cfg.data.num_trajectories, cfg.data.samples, rng,
                       cfg.data.init_lower, cfg.data.init_upper, cfg.data.max_retries)
    result.trajectories = trajs
    D = assemble_data(trajs)

    ms = stages.run("identify", compute_model_set, D, plant.W)
    true_AB = np.hstack([plant.A, plant.B])
    gauge = zonotope_gauge(ms.mz.as_vector_zonotope(), true_AB.reshape(-1))
    V = stages.run("vertices", extract_vertex_models, ms, cfg.max_generators)
    result.vertex_models = V
    reduced = reduced_model_set(ms, cfg.max_generators)
    report["identification"] = {
        "samples": D.T,
        "generators": ms.mz.num_generators,
        "reduced_generators": reduced.mz.num_generators,
        "vertex_models": len(V),
        "center": ms.mz.center.tolist(),
        "true_model_gauge": gauge,
        "true_model_contained": bool(gauge <= 1.0 + 1e-8),
    }

    T0 = stages.run("terminal", terminal_seed, V, cfg.offline.terminal)
    weights = None if cfg.offline.weights is None else np.asarray(cfg.offline.weights, dtype=float)
    family = stages.run("offline", compute_family, V, T0, plant.X, plant.U, plant.W, cfg.offline.levels,
                        cfg.offline.template_policy, weights)
    result.family = family
    remark5 = check_terminal_feasibility(T0, family.level(1))
    report["family"] = {
        "levels": family.N,
        "terminal_in_level1": bool(remark5),
        "exact_rows": [lvl.hpoly.num_rows for lvl in family.levels],
        "generators": [lvl.inner.num_generators for lvl in family.levels],
    }
    if not remark5:
        stages.run("terminal_check", _raise, RuntimeError("terminal seed is not inside the first level"))

    x0 = np.asarray(cfg.online.x0, dtype=float)
    W_runs = sample_disturbance(plant.W, disturbance_rng(cfg.seed, 0), cfg.online.horizon, cfg.online.disturbance)
    state = build_controller(cfg, family)
    loop = stages.run("online", run_loop, x0, lambda x: ctl.step(x, state), plant, W_runs)
    result.loops["dstmpc"] = loop
    report["closed_loop"] = {"dstmpc": {**loop.to_dict(), **loop_checks(loop, plant)}}

    if compare:
        levels = max(cfg.offline.oracle_levels, family.N)
        oracle = stages.run("oracle", model_based_family, plant.A, plant.B, T0, plant.X, plant.U, plant.W, levels)
        result.oracle = oracle
        st_oracle = oracle[: cfg.offline.oracle_levels + 1]
        R = np.asarray(cfg.online.R, dtype=float)
        policy = lambda x: ctl.model_based_step(x, (plant.A, plant.B), st_oracle, plant.W, plant.U, R)
        ref = stages.run("compare", run_loop, x0, policy, plant, W_runs)
        result.loops["stmpc"] = ref
        report["closed_loop"]["stmpc"] = {**ref.to_dict(), **loop_checks(ref, plant)}
        report["oracle"] = {"levels": len(oracle) - 1, "rows": [P.num_rows for P in oracle]}

    if audits:
        arng = np.random.default_rng([cfg.seed, 10 ** 6])
        a = {
            "inner_soundness": stages.run("audit_inner", audit_inner_soundness, family, arng),
            "one_step_containment": stages.run("audit_one_step", audit_one_step, family, V, plant.W, arng),
            "terminal_in_levels": audit_growth(family),
        }
        if result.oracle is not None:
            a["oracle_dominance"] = audit_dominance(family, result.oracle)
        report["audits"] = a


def _raise(err):
    raise err


def write_artifacts(result: ExperimentReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if result.trajectories is not None:
        write_trajectories_csv(out / "trajectories.csv", result.trajectories)
    if result.family is not None:
        write_json(out / "family.json", result.family.to_dict())
    if result.oracle is not None:
        write_json(out / "oracle.json", [P.to_dict() for P in result.oracle])
    traces = {name: loop.states for name, loop in result.loops.items()}
    if result.family is not None:
        write_plot_csv(out / "plot.csv", result.family, result.oracle, traces)
    write_json(out / "report.json", result.report)
    # wall-clock numbers vary run to run, so they stay out of the report
    write_json(out / "timing.json", result.timing)


# ---------------------------------------------------------------- multi-run audit

def closed_loop_audit(cfg: ExperimentConfig, result: ExperimentReport, runs: Optional[int] = None,
                      workers: int = 1) -> dict:
    """Paired closed-loop runs on ``runs`` disturbance realizations, merged in run order."""
    runs = cfg.audit.runs if runs is None else runs
    plant = cfg.plant
    x0 = np.asarray(cfg.online.x0, dtype=float)
    R = np.asarray(cfg.online.R, dtype=float)
    st_oracle = None if result.oracle is None else result.oracle[: cfg.offline.oracle_levels + 1]

    def one(r):
        noise = sample_disturbance(plant.W, disturbance_rng(cfg.seed, r), cfg.online.horizon, cfg.online.disturbance)
        state = build_controller(cfg, result.family)
        d = loop_checks(run_loop(x0, lambda x: ctl.step(x, state), plant, noise), plant)
        entry = {"run": r, "dstmpc": d}
        if st_oracle is not None:
            policy = lambda x: ctl.model_based_step(x, (plant.A, plant.B), st_oracle, plant.W, plant.U, R)
            s = loop_checks(run_loop(x0, policy, plant, noise), plant)
            entry["stmpc"] = s
            entry["dominance"] = (d["reached_at"] is not None and s["reached_at"] is not None
                                  and d["reached_at"] >= s["reached_at"])
        return entry

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        entries = list(pool.map(one, range(runs)))

    def good(c):
        return (c["error"] is None and c["within_j0"] and c["index_descent"] and c["terminal_invariant"]
                and c["state_ok"] and c["input_ok"])

    summary = {
        "runs": runs,
        "dstmpc_pass": sum(good(e["dstmpc"]) for e in entries),
        "dstmpc_steps": [e["dstmpc"]["reached_at"] for e in entries],
    }
    if st_oracle is not None:
        summary["stmpc_pass"] = sum(good(e["stmpc"]) for e in entries)
        summary["stmpc_steps"] = [e["stmpc"]["reached_at"] for e in entries]
        summary["dominance_pass"] = sum(bool(e["dominance"]) for e in entries)
    summary["all_pass"] = (summary["dstmpc_pass"] == runs
                           and summary.get("stmpc_pass", runs) == runs
                           and summary.get("dominance_pass", runs) == runs)
    return {"summary": summary, "runs": entries}


def invariant_suite(result: ExperimentReport) -> dict:
    """Pass/fail view of the stored audits of a finished experiment."""
    a = result.report.get("audits", {})
    checks = {
        "completed": result.ok,
        "true_model_contained": result.report.get("identification", {}).get("true_model_contained", False),
        "terminal_in_level1": result.report.get("family", {}).get("terminal_in_level1", False),
        "inner_soundness": bool(a) and max(a["inner_soundness"]) <= 1e-8,
        "one_step_containment": bool(a) and max(a["one_step_containment"]) <= 1e-7,
    }
    if "oracle_dominance" in a:
        checks["oracle_dominance"] = all(a["oracle_dominance"])
    return checks
