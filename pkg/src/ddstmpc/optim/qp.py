"""Primal active-set method for small convex quadratic programs.

    minimize    0.5 x'Qx + q'x
    subject to  A x <= b,  E x == f

Each iteration solves the equality-constrained subproblem on the null space of
the working set. Zero-curvature directions of the reduced Hessian are handled
explicitly so that a positive semidefinite ``Q`` (cost on a subset of the
variables) is accepted when the problem says so.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lp import LpProblem, _as_matrix, _as_vector, solve_lp
from .status import SolveKind, SolveStatus

KKT_TOL = 1e-7
MULT_TOL = 1e-9
FEAS_TOL = 1e-8


@dataclass(frozen=True)
class QpProblem:
    Q: np.ndarray
    q: np.ndarray
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    E: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None
    semidefinite: bool = False  # skip the strict-convexity check

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise ValueError("Q must be square")
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-10:
            raise ValueError("Q must be symmetric")
        q = _as_vector(self.q, n, "q")
        A = _as_matrix(self.A, n, "A")
        b = _as_vector(self.b, A.shape[0], "b")
        E = _as_matrix(self.E, n, "E")
        f = _as_vector(self.f, E.shape[0], "f")
        if not self.semidefinite:
            try:
                np.linalg.cholesky(Q)
            except np.linalg.LinAlgError as err:
                raise ValueError("Q is not positive definite") from err
        else:
            if np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() < -1e-10:
                raise ValueError("Q is not positive semidefinite")
        for name, arr in (("Q", Q), ("q", q), ("A", A), ("b", b), ("E", E), ("f", f)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_vars(self) -> int:
        return self.Q.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.Q @ x + self.q @ x)


def _null_space(K, n):
    if K.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(K)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
    return vt[rank:].T


def _independent(rows, candidate):
    if rows.shape[0] == 0:
        return np.linalg.norm(candidate) > 1e-12
    stacked = np.vstack([rows, candidate])
    return np.linalg.matrix_rank(stacked, tol=1e-10 * max(1.0, np.abs(stacked).max())) == stacked.shape[0]


def _initial_point(p: QpProblem, x0):
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if np.all(p.A @ x0 <= p.b + FEAS_TOL) and np.all(np.abs(p.E @ x0 - p.f) <= FEAS_TOL):
            return x0, None
    if p.A.shape[0] + p.E.shape[0] == 0:
        return np.zeros(p.num_vars), None
    res = solve_lp(LpProblem(c=np.zeros(p.num_vars), A_ub=p.A, b_ub=p.b, A_eq=p.E, b_eq=p.f))
    if res.kind is SolveKind.OPTIMAL:
        return res.solution, None
    return None, res


def solve_qp(problem: QpProblem, x0=None, max_iter: Optional[int] = None) -> SolveStatus:
    """Solve a convex QP by the primal active-set method."""
    p = problem
    n = p.num_vars
    A, b, E, f, Q, q = p.A, p.b, p.E, p.f, p.Q, p.q
    m = A.shape[0]
    if max_iter is None:
        max_iter = 10 * (n + m + E.shape[0])

    x, lp_res = _initial_point(p, x0)
    if x is None:
        kind = SolveKind.INFEASIBLE if lp_res.kind is SolveKind.INFEASIBLE else SolveKind.NUMERICAL_FAILURE
        return SolveStatus(kind, message=f"phase 1: {lp_res.kind.value}")

    eq_rows = np.zeros((0, n))
    for row in E:
        if _independent(eq_rows, row):
            eq_rows = np.vstack([eq_rows, row])
    working: list[int] = []
    slack = b - A @ x
    for i in np.flatnonzero(np.abs(slack) <= 1e-9 * (1.0 + np.abs(b))):
        if _independent(np.vstack([eq_rows, A[working]]), A[i]):
            working.append(int(i))

    for it in range(max_iter):
        g = Q @ x + q
        K = np.vstack([eq_rows, A[working]])
        Z = _null_space(K, n)
        step = np.zeros(n)
        ray = False
        if Z.shape[1] > 0:
            Hr = Z.T @ Q @ Z
            gr = Z.T @ g
            lam, V = np.linalg.eigh(0.5 * (Hr + Hr.T))
            curv_tol = 1e-10 * max(1.0, np.abs(lam).max(initial=0.0))
            coef = V.T @ gr
            flat = lam <= curv_tol
            if np.any(flat & (np.abs(coef) > 1e-12 * (1.0 + np.abs(g).max()))):
                # zero-curvature descent direction: move until a constraint blocks
                step = -Z @ (V[:, flat] @ coef[flat])
                ray = True
            else:
                curved = ~flat
                step = -Z @ (V[:, curved] @ (coef[curved] / lam[curved]))

        if np.linalg.norm(step) <= 1e-12 * (1.0 + np.linalg.norm(x)):
            mult, *_ = np.linalg.lstsq(K.T, -g, rcond=None)
            lam_ineq = mult[eq_rows.shape[0]:]
            if lam_ineq.size == 0 or lam_ineq.min() >= -MULT_TOL:
                return _finish(p, x, working, mult, eq_rows.shape[0], it)
            worst = lam_ineq.min()
            drop = [k for k, v in enumerate(lam_ineq) if v <= worst + 1e-14]
            del working[min(drop, key=lambda k: working[k])]
            continue

        Ap = A @ step
        alpha = np.inf if ray else 1.0
        blocking = None
        cand = [i for i in np.flatnonzero(Ap > 1e-12 * (1.0 + np.abs(A).max(initial=0.0)))
                if i not in working]
        for i in cand:
            a_i = max(b[i] - A[i] @ x, 0.0) / Ap[i]
            if a_i < alpha - 1e-15:
                alpha, blocking = a_i, int(i)
        if not np.isfinite(alpha):
            return SolveStatus(SolveKind.UNBOUNDED, iterations=it, message="unbounded ray")
        x = x + alpha * step
        if blocking is not None:
            working.append(blocking)
    return SolveStatus(SolveKind.NUMERICAL_FAILURE, iterations=max_iter, message="iteration cap reached")


def _finish(p: QpProblem, x, working, mult, n_eq, it) -> SolveStatus:
    lam = np.zeros(p.A.shape[0])
    lam[working] = mult[n_eq:]
    # equality multipliers w.r.t. the original (possibly dependent) rows
    nu, *_ = np.linalg.lstsq(p.E.T, -(p.Q @ x + p.q + p.A.T @ lam), rcond=None) if p.E.shape[0] else (np.zeros(0),)
    resid = p.Q @ x + p.q + p.A.T @ lam + p.E.T @ nu
    scale = 1.0 + np.abs(p.Q @ x + p.q).max(initial=0.0)
    feas = np.all(p.A @ x <= p.b + FEAS_TOL * (1.0 + np.abs(p.b))) and np.all(
        np.abs(p.E @ x - p.f) <= FEAS_TOL * (1.0 + np.abs(p.f)))
    if np.abs(resid).max(initial=0.0) > KKT_TOL * scale or not feas or lam.min(initial=0.0) < -MULT_TOL:
        return SolveStatus(SolveKind.NUMERICAL_FAILURE, iterations=it, message="KKT self-check failed")
    return SolveStatus(SolveKind.OPTIMAL, solution=x, objective_value=p.objective(x), iterations=it,
                       duals={"ineq": lam, "eq": nu, "active": sorted(working)})
