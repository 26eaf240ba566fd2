from __future__ import annotations

import numpy as np

from ..optim.lp import LpProblem, solve_lp
from ..setgeom import HPolytope, Zonotope, contains_point
from ..sysid import Trajectory, assemble_data, check_rank
from .config import PlantConfig


class RankNotAchieved(RuntimeError):
    pass


def simulate_plant(cfg: PlantConfig, x, u, w) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(cfg.state_dim)
    u = np.asarray(u, dtype=float).reshape(cfg.input_dim)
    w = np.asarray(w, dtype=float).reshape(cfg.state_dim)
    return cfg.A @ x + cfg.B @ u + w


def sample_disturbance(W: Zonotope, rng: np.random.Generator, count: int, mode: str = "uniform") -> np.ndarray:
    """``uniform`` draws beta uniformly in the unit box, ``vertex`` draws beta in {-1, 1}."""
    if mode == "uniform":
        return W.sample(rng, count)
    if mode == "vertex":
        beta = rng.choice([-1.0, 1.0], size=(count, W.num_generators))
        return W.center + beta @ W.generators.T
    if mode == "zero":
        return np.tile(W.center, (count, 1))
    raise ValueError(f"unknown disturbance mode {mode!r}")


def bounding_box(P: HPolytope):
    n = P.dim
    lo, hi = np.empty(n), np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        top = solve_lp(LpProblem(c=-e, A_ub=P.C, b_ub=P.d))
        bottom = solve_lp(LpProblem(c=e, A_ub=P.C, b_ub=P.d))
        if not (top.ok and bottom.ok):
            raise ValueError("polytope is empty or unbounded")
        hi[i], lo[i] = -top.objective_value, bottom.objective_value
    return lo, hi


def sample_polytope(P: HPolytope, rng: np.random.Generator, count: int, max_tries: int = 1000) -> np.ndarray:
    """Uniform samples by rejection from the bounding box (exact for boxes)."""
    lo, hi = bounding_box(P)
    out = []
    for _ in range(max_tries):
        cand = rng.uniform(lo, hi, size=(count, P.dim))
        ok = np.all(cand @ P.C.T <= P.d + 1e-12, axis=1)
        out.extend(cand[ok])
        if len(out) >= count:
            return np.array(out[:count])
    raise RuntimeError("rejection sampling did not collect enough points")


def collect_trajectories(cfg: PlantConfig, N_t: int, N_s: int, rng: np.random.Generator,
                         init_lower=None, init_upper=None, max_retries: int = 100) -> list:
    """Random admissible input experiments until the stacked data has full row rank.

    Inputs are uniform over U, disturbances uniform over W (uniform beta) and
    initial states uniform in the box ``[init_lower, init_upper]`` (default:
    the central half of the bounding box of X).
    """
    if N_t < 1 or N_s < 1:
        raise ValueError("N_t and N_s must be >= 1")
    if init_lower is None or init_upper is None:
        lo, hi = bounding_box(cfg.X)
        mid, half = 0.5 * (lo + hi), 0.25 * (hi - lo)
        init_lower, init_upper = mid - half, mid + half
    init_lower = np.asarray(init_lower, dtype=float)
    init_upper = np.asarray(init_upper, dtype=float)
    for _ in range(max_retries):
        trajs = []
        for _ in range(N_t):
            x = rng.uniform(init_lower, init_upper)
            inputs = sample_polytope(cfg.U, rng, N_s)
            noise = sample_disturbance(cfg.W, rng, N_s)
            states = [x]
            for k in range(N_s):
                x = simulate_plant(cfg, x, inputs[k], noise[k])
                states.append(x)
            trajs.append(Trajectory(np.array(states), inputs))
        if check_rank(assemble_data(trajs)):
            return trajs
    raise RankNotAchieved(f"data matrix stayed rank deficient after {max_retries} attempts")


def states_in(P: HPolytope, xs, tol: float = 1e-9) -> bool:
    return all(contains_point(P, x, tol) for x in xs)
