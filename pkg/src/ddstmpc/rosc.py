"""Robust one-step controllable (ROSC) sets in the augmented (x, u) space.

Offline recursion: starting from a terminal zonotope ``T0``, each level j

1. stacks, for every vertex model (A_i, B_i), the half-spaces

       [H_x     0    ]          [h_x          ]
       [H_T A_i H_T B_i] z  <=  [h_T - h_W(H_T)]
       [0       H_u  ]          [h_u          ]

   where ``H_T z <= h_T`` is the previous level and ``h_W`` the support of the
   disturbance zonotope (Pontryagin tightening);
2. fits a scaled template zonotope inside that polytope (weighted-log program);
3. projects the fitted zonotope onto x and converts it back to half-spaces for
   the next level.

The model-based oracle eliminates ``u`` from the single-model polytope by
Fourier-Motzkin and is only used for ground-truth comparisons.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .optim.logvol import solve_weighted_log
from .optim.lp import LpProblem, solve_lp
from .optim.status import SolverError
from .setgeom import (
    HPolytope,
    VertexModels,
    Zonotope,
    project,
    remove_redundant_rows,
    support_rows,
    tighten,
    zonotope_in_hpoly,
    zonotope_to_hpoly,
)

logger = logging.getLogger(__name__)

TEMPLATE_POLICIES = ("axis", "inherit", "mixed", "preimage")
INNER_TOL = 1e-8
FM_ROW_CAP = 10000


class LevelInfeasible(RuntimeError):
    def __init__(self, index: int, reason: str):
        self.index = index
        super().__init__(f"ROSC level {index} infeasible: {reason}")


@dataclass(frozen=True)
class AugmentedRosc:
    index: int
    hpoly: HPolytope  # exact intersection over vertex models, in R^(n+m)
    inner: Zonotope  # inner zonotope in R^(n+m)
    projected: Zonotope  # x-projection of ``inner``
    diagnostics: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "inner": self.inner.to_dict(),
            "projected": self.projected.to_dict(),
            "exact_rows": self.hpoly.num_rows,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class RoscFamily:
    terminal: Zonotope
    levels: tuple
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        for j, level in enumerate(self.levels, start=1):
            if level.index != j:
                raise ValueError(f"level {j} carries index {level.index}")

    @property
    def N(self) -> int:
        return len(self.levels)

    @property
    def state_dim(self) -> int:
        return self.terminal.dim

    def level(self, j: int) -> AugmentedRosc:
        return self.levels[j - 1]

    def projected(self, j: int) -> Zonotope:
        return self.terminal if j == 0 else self.levels[j - 1].projected

    def to_dict(self) -> dict:
        return {
            "terminal": self.terminal.to_dict(),
            "levels": [lvl.to_dict() for lvl in self.levels],
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RoscFamily":
        """Rebuild a family from JSON. The exact polytopes are not stored; a
        placeholder with the stored row count metadata is kept in diagnostics."""
        levels = []
        for item in data["levels"]:
            inner = Zonotope.from_dict(item["inner"])
            levels.append(AugmentedRosc(
                index=int(item["index"]),
                hpoly=_bounding_hpoly(inner),
                inner=inner,
                projected=Zonotope.from_dict(item["projected"]),
                diagnostics=dict(item.get("diagnostics", {}), exact_rows=item.get("exact_rows")),
            ))
        return cls(Zonotope.from_dict(data["terminal"]), levels, data.get("config", {}))


def _bounding_hpoly(Z: Zonotope) -> HPolytope:
    n = Z.dim
    C = np.vstack([np.eye(n), -np.eye(n)])
    return HPolytope(C, support_rows(Z, C))


# ---------------------------------------------------------------- assembly

def augmented_halfspaces(model, T_prev: HPolytope, X: HPolytope, U: HPolytope, W: Zonotope) -> HPolytope:
    """Half-spaces of {(x, u) in X x U : A x + B u + w in T_prev for all w in W}."""
    A, B = (np.atleast_2d(np.asarray(M, dtype=float)) for M in model)
    n, m = A.shape[0], B.shape[1]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ValueError("model matrices have inconsistent shapes")
    for P, dim, what in ((T_prev, n, "target"), (X, n, "state set"), (U, m, "input set")):
        if P.dim != dim:
            raise ValueError(f"{what} has dimension {P.dim}, expected {dim}")
    if W.dim != n:
        raise ValueError("disturbance dimension mismatch")
    target = tighten(T_prev, W)
    C = np.vstack([
        np.hstack([X.C, np.zeros((X.num_rows, m))]),
        np.hstack([target.C @ A, target.C @ B]),
        np.hstack([np.zeros((U.num_rows, n)), U.C]),
    ])
    d = np.concatenate([X.d, target.d, U.d])
    return HPolytope(C, d)


def _assemble(V: VertexModels, T_prev: HPolytope, X: HPolytope, U: HPolytope, W: Zonotope) -> HPolytope:
    """Intersection over all vertex models; the shared X and U blocks appear once."""
    n, m = V.state_dim, V.input_dim
    target = tighten(T_prev, W)
    mats = V.matrices  # (k, n, n+m)
    middle = np.einsum("rn,knc->krc", target.C, mats).reshape(-1, n + m)
    middle_d = np.tile(target.d, len(V))
    C = np.vstack([
        np.hstack([X.C, np.zeros((X.num_rows, m))]),
        middle,
        np.hstack([np.zeros((U.num_rows, n)), U.C]),
    ])
    d = np.concatenate([X.d, middle_d, U.d])
    return HPolytope(C, d)


def _bounding_halfwidths(P: HPolytope) -> np.ndarray:
    """Half-widths of the axis-aligned bounding box of a bounded polytope."""
    n = P.dim
    widths = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        hi = solve_lp(LpProblem(c=-e, A_ub=P.C, b_ub=P.d))
        lo = solve_lp(LpProblem(c=e, A_ub=P.C, b_ub=P.d))
        if not (hi.ok and lo.ok):
            raise ValueError("constraint set must be bounded and non-empty")
        widths[i] = 0.5 * (-hi.objective_value - lo.objective_value)
    return widths


def _rescale_template(G: np.ndarray, halfwidths: np.ndarray) -> np.ndarray:
    """Stretch each generator to the half-width of the X x U box along it.

    A generator longer than that can never fit, so the ``beta <= 1`` cap of the
    weighted-log program stops being the binding constraint.
    """
    norms = np.linalg.norm(G, axis=0)
    unit = G / np.where(norms > 0, norms, 1.0)
    reach = np.abs(unit).T @ halfwidths
    return unit * reach


def backward_step(
    V: VertexModels,
    T_prev_hrep: HPolytope,
    X: HPolytope,
    U: HPolytope,
    W: Zonotope,
    template: Zonotope,
    index: int = 1,
    weights=None,
    linear: bool = False,
    rescale: bool = True,
) -> AugmentedRosc:
    n, m = V.state_dim, V.input_dim
    if template.dim != n + m:
        raise ValueError(f"template must live in R^{n + m}")
    exact = _assemble(V, T_prev_hrep, X, U, W)
    G = template.generators
    if G.shape[1] == 0 or np.any(np.linalg.norm(G, axis=0) <= 1e-12):
        raise ValueError("template has a zero generator (no interior to scale)")
    if rescale:
        halfwidths = np.concatenate([_bounding_halfwidths(X), _bounding_halfwidths(U)])
        G = _rescale_template(G, halfwidths)
    try:
        fit = solve_weighted_log(G, weights, exact.C, exact.d, linear=linear)
    except SolverError as err:
        raise LevelInfeasible(index, str(err)) from err
    keep = fit.scales > 1e-9
    inner = Zonotope(fit.center, G[:, keep] * fit.scales[keep])
    if not zonotope_in_hpoly(inner, exact, INNER_TOL):
        raise LevelInfeasible(index, "inner zonotope escapes the exact polytope")
    projected = project(inner, range(n))
    diagnostics = {
        "exact_rows": exact.num_rows,
        "vertex_models": len(V),
        "template_generators": int(G.shape[1]),
        "beta": fit.scales.tolist(),
        "objective": fit.objective,
        "solver_iterations": fit.iterations,
    }
    return AugmentedRosc(index, exact, inner, projected, diagnostics)


def make_template(
    prev_projected: Zonotope,
    U: HPolytope,
    policy: str = "mixed",
    model=None,
) -> Zonotope:
    """Template generator directions for the next level (center is irrelevant).

    ``axis``      identity in R^(n+m)
    ``inherit``   previous projected generators lifted as (g, 0), plus (0, e_k) per input
    ``mixed``     union of the two, capped at 3 (n + m) generators
    ``preimage``  (A^-1 g, 0) for each previous generator plus (-A^-1 B e_k, e_k);
                  needs ``model=(A, B)``, typically the mean of the vertex models
    """
    n, m = prev_projected.dim, U.dim
    N = n + m
    axis = np.eye(N)
    G_prev = prev_projected.generators
    G_prev = G_prev[:, np.linalg.norm(G_prev, axis=0) > 1e-12]
    lifted = np.vstack([G_prev, np.zeros((m, G_prev.shape[1]))])
    inputs = np.vstack([np.zeros((n, m)), np.eye(m)])
    if policy == "axis":
        G = axis
    elif policy == "inherit":
        G = np.hstack([lifted, inputs])
    elif policy == "mixed":
        G = _dedupe_directions(np.hstack([axis, lifted, inputs]))
        G = _cap_by_norm(G, 3 * N, protect=N)
    elif policy == "preimage":
        if model is None:
            raise ValueError("preimage template needs a model (A, B)")
        A, B = (np.atleast_2d(np.asarray(M, dtype=float)) for M in model)
        Ainv = np.linalg.inv(A)
        state = np.vstack([Ainv @ G_prev, np.zeros((m, G_prev.shape[1]))])
        kernel = np.vstack([-Ainv @ B, np.eye(m)])
        G = np.hstack([_cap_by_norm(state, 3 * N - m), kernel])
    else:
        raise ValueError(f"unknown template policy {policy!r}; choose from {TEMPLATE_POLICIES}")
    return Zonotope(np.zeros(N), G)


def _dedupe_directions(G: np.ndarray) -> np.ndarray:
    keep = []
    for j in range(G.shape[1]):
        g = G[:, j] / np.linalg.norm(G[:, j])
        if all(abs(g @ (G[:, k] / np.linalg.norm(G[:, k]))) < 1.0 - 1e-10 for k in keep):
            keep.append(j)
    return G[:, keep]


def _cap_by_norm(G: np.ndarray, cap: int, protect: int = 0) -> np.ndarray:
    """Keep the first ``protect`` columns and the largest-norm remaining ones, up to ``cap``."""
    if G.shape[1] <= cap:
        return G
    rest = np.arange(protect, G.shape[1])
    order = rest[np.argsort(-np.linalg.norm(G[:, rest], axis=0), kind="stable")]
    chosen = np.sort(np.concatenate([np.arange(protect), order[: cap - protect]]))
    return G[:, chosen]


def compute_family(
    V: VertexModels,
    T0: Zonotope,
    X: HPolytope,
    U: HPolytope,
    W: Zonotope,
    N: int,
    template_policy: str = "mixed",
    weights=None,
    linear: bool = False,
) -> RoscFamily:
    """Levels 1..N of the data-driven ROSC family; stops early on an infeasible level."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not zonotope_in_hpoly(T0, X):
        raise ValueError("terminal set must lie inside the state constraints")
    mean_model = V.matrices.mean(axis=0)
    model = (mean_model[:, :V.state_dim], mean_model[:, V.state_dim:])
    levels = []
    prev = T0
    for j in range(1, N + 1):
        try:
            T_prev_hrep = zonotope_to_hpoly(prev)
            template = make_template(prev, U, template_policy, model=model)
            level = backward_step(V, T_prev_hrep, X, U, W, template, index=j, weights=weights, linear=linear)
        except (LevelInfeasible, ValueError) as err:
            if not levels:
                raise LevelInfeasible(j, str(err)) from err
            warnings.warn(f"ROSC family stopped at level {j}: {err}", RuntimeWarning, stacklevel=2)
            break
        logger.debug("level %d: %d rows, %d generators", j, level.hpoly.num_rows, level.inner.num_generators)
        levels.append(level)
        prev = level.projected
    config = {"template_policy": template_policy, "requested_levels": N, "linear": linear,
              "vertex_models": len(V)}
    return RoscFamily(T0, levels, config)


def check_terminal_feasibility(T0: Zonotope, level1: AugmentedRosc, tol: float = 1e-9) -> bool:
    """True when the terminal seed lies inside the first projected level."""
    if T0.dim != level1.projected.dim:
        raise ValueError("dimension mismatch")
    return zonotope_in_hpoly(T0, zonotope_to_hpoly(level1.projected), tol)


# ---------------------------------------------------------------- model-based oracle

def _eliminate_last(C: np.ndarray, d: np.ndarray):
    a = C[:, -1]
    scale = 1e-12 * max(1.0, np.abs(C).max())
    pos, neg, zero = a > scale, a < -scale, np.abs(a) <= scale
    rows = [C[zero, :-1]]
    offs = [d[zero]]
    if pos.any() and neg.any():
        Cp, dp = C[pos] / a[pos, None], d[pos] / a[pos]
        Cn, dn = C[neg] / -a[neg, None], d[neg] / -a[neg]
        combo = (Cp[:, None, :-1] + Cn[None, :, :-1]).reshape(-1, C.shape[1] - 1)
        rows.append(combo)
        offs.append((dp[:, None] + dn[None, :]).reshape(-1))
    return np.vstack(rows), np.concatenate(offs)


def _clean_rows(C, d):
    norms = np.linalg.norm(C, axis=1)
    trivial = norms <= 1e-12
    if np.any(trivial & (d < -1e-12)):
        raise LevelInfeasible(-1, "projection is empty")
    C, d, norms = C[~trivial], d[~trivial], norms[~trivial]
    return C / norms[:, None], d / norms


def fourier_motzkin(P: HPolytope, keep: int) -> HPolytope:
    """Project onto the first ``keep`` coordinates, pruning redundant rows after each elimination."""
    C, d = np.array(P.C), np.array(P.d)
    while C.shape[1] > keep:
        C, d = _eliminate_last(C, d)
        if C.shape[0] > FM_ROW_CAP:
            raise RuntimeError(f"Fourier-Motzkin produced {C.shape[0]} rows (cap {FM_ROW_CAP})")
        C, d = _clean_rows(C, d)
        reduced = remove_redundant_rows(HPolytope(C, d))
        C, d = np.array(reduced.C), np.array(reduced.d)
    return HPolytope(C, d)


def model_based_backward_step(A, B, T_prev: HPolytope, X: HPolytope, U: HPolytope, W: Zonotope) -> HPolytope:
    """Exact ROSC polytope of ``T_prev`` for a known model."""
    aug = augmented_halfspaces((A, B), T_prev, X, U, W)
    n = np.atleast_2d(A).shape[0]
    return fourier_motzkin(aug, n)


def model_based_family(A, B, T0, X: HPolytope, U: HPolytope, W: Zonotope, N: int) -> list:
    """``[T^0, T^1, ..., T^N]`` as H-polytopes (``T0`` may be a zonotope or a polytope)."""
    T = zonotope_to_hpoly(T0) if isinstance(T0, Zonotope) else T0
    family = [T]
    for j in range(1, N + 1):
        try:
            T = model_based_backward_step(A, B, T, X, U, W)
        except LevelInfeasible as err:
            raise LevelInfeasible(j, str(err)) from err
        family.append(T)
    return family
