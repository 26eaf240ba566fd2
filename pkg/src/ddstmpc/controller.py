"""Online set-theoretic MPC over a precomputed ROSC family.

At each step the controller finds the smallest level ``j`` whose projected
zonotope contains the state and then picks the cheapest input that keeps
``(x, u)`` inside the level-``j`` augmented zonotope, so the successor lands in
level ``j - 1`` for every model in the set and every disturbance. The QP is
posed over ``(u, beta)`` with ``c + G beta = (x, u)`` and ``|beta| <= 1``,
which avoids converting the augmented zonotope to half-spaces online.

``model_based_step`` is the same scheme with a known model and exact
polytopic levels; it is used as the reference in comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .optim.qp import QpProblem, solve_qp
from .rosc import RoscFamily
from .setgeom import HPolytope, Zonotope, contains_point, tighten, zonotope_contains_point

MEMBERSHIP_TOL = 1e-8
TERMINAL_MODES = ("gain", "qp_level1")


class OutsideFamilyError(RuntimeError):
    """The state lies in none of the levels (outside the domain of attraction)."""


class InfeasibleStepError(RuntimeError):
    """The online QP has no solution although the state passed the membership test."""


@dataclass
class ControllerState:
    family: RoscFamily
    R: np.ndarray
    r: Optional[np.ndarray] = None  # linear cost term on u
    terminal_mode: str = "qp_level1"
    K: Optional[np.ndarray] = None  # terminal law u = -K x
    U: Optional[HPolytope] = None  # used to validate the gain law
    last_index: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        n = self.family.state_dim
        m = self.family.level(1).inner.dim - n
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if self.R.shape != (m, m):
            raise ValueError(f"R must be {m}x{m}")
        if not np.allclose(self.R, self.R.T, atol=1e-12):
            raise ValueError("R must be symmetric")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be positive definite")
        self.r = np.zeros(m) if self.r is None else np.asarray(self.r, dtype=float).reshape(m)
        if self.terminal_mode not in TERMINAL_MODES:
            raise ValueError(f"terminal_mode must be one of {TERMINAL_MODES}")
        if self.K is not None:
            self.K = np.atleast_2d(np.asarray(self.K, dtype=float))
            if self.K.shape != (m, n):
                raise ValueError(f"K must be {m}x{n}")
        if self.terminal_mode == "gain" and self.K is None:
            raise ValueError("gain terminal mode needs K")

    @property
    def state_dim(self) -> int:
        return self.family.state_dim

    @property
    def input_dim(self) -> int:
        return self.R.shape[0]


def membership_index(x, family: RoscFamily, tol: float = MEMBERSHIP_TOL) -> int:
    x = np.asarray(x, dtype=float)
    for j in range(family.N + 1):
        if zonotope_contains_point(family.projected(j), x, tol):
            return j
    raise OutsideFamilyError(f"state {x.tolist()} is outside all {family.N} levels")


def compute_control(x, j: int, state: ControllerState) -> np.ndarray:
    if not 1 <= j <= state.family.N:
        raise ValueError(f"level {j} outside 1..{state.family.N}")
    x = np.asarray(x, dtype=float)
    n, m = state.state_dim, state.input_dim
    inner: Zonotope = state.family.level(j).inner
    c, G = inner.center, inner.generators
    p = G.shape[1]
    # z = (u, beta)
    Q = np.zeros((m + p, m + p))
    Q[:m, :m] = state.R
    q = np.concatenate([state.r, np.zeros(p)])
    E = np.vstack([
        np.hstack([np.zeros((n, m)), G[:n]]),
        np.hstack([-np.eye(m), G[n:]]),
    ])
    f = np.concatenate([x - c[:n], -c[n:]])
    bound = 1.0 + MEMBERSHIP_TOL
    box = np.hstack([np.zeros((p, m)), np.eye(p)])
    A_in = np.vstack([box, -box])
    b_in = np.full(2 * p, bound)
    result = solve_qp(QpProblem(Q, q, A_in, b_in, E, f, semidefinite=True))
    if not result.ok:
        raise InfeasibleStepError(f"level {j} QP: {result.kind.value} ({result.message})")
    return result.solution[:m]


def terminal_control(x, state: ControllerState) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if state.terminal_mode == "gain":
        u = -state.K @ x
        if state.U is not None and not contains_point(state.U, u):
            raise ValueError(f"terminal gain gives u = {u.tolist()} outside the input set")
        return u
    return compute_control(x, 1, state)


def step(x, state: ControllerState):
    j = membership_index(x, state.family)
    u = terminal_control(x, state) if j == 0 else compute_control(x, j, state)
    state.last_index = j
    return u, j


# ---------------------------------------------------------------- known-model reference

def oracle_index(x, oracle: Sequence[HPolytope], tol: float = MEMBERSHIP_TOL) -> int:
    for j, P in enumerate(oracle):
        if contains_point(P, x, tol):
            return j
    raise OutsideFamilyError(f"state {np.asarray(x).tolist()} is outside all {len(oracle) - 1} oracle levels")


def model_based_step(x, model, oracle: Sequence[HPolytope], W: Zonotope, U: HPolytope, R, r=None):
    """One step of the known-model controller; returns ``(u, j)``.

    For ``j >= 1`` the successor is steered into level ``j - 1``; in the
    terminal level it is kept inside ``oracle[0]``.
    """
    A, B = (np.atleast_2d(np.asarray(M, dtype=float)) for M in model)
    x = np.asarray(x, dtype=float)
    m = B.shape[1]
    R = np.atleast_2d(np.asarray(R, dtype=float))
    r = np.zeros(m) if r is None else np.asarray(r, dtype=float).reshape(m)
    j = oracle_index(x, oracle)
    target = tighten(oracle[max(j - 1, 0)], W)
    A_in = np.vstack([target.C @ B, U.C])
    b_in = np.concatenate([target.d - target.C @ A @ x, U.d])
    result = solve_qp(QpProblem(R, r, A_in, b_in))
    if not result.ok:
        raise InfeasibleStepError(f"oracle level {j} QP: {result.kind.value} ({result.message})")
    return result.solution, j
