"""Largest scaled template zonotope inside an H-polytope.

Given template generators ``G`` (N x p), weights ``d >= 0`` and a polytope
``{z : H z <= h}``, find a center ``c`` and per-generator scales ``beta`` that

    maximize    sum_l d_l log(beta_l)
    subject to  H c + |H G| beta <= h,   0 <= beta <= 1.

The constraint is exactly the support-function containment test for
``Z(c, G diag(beta))`` in the polytope, so any feasible point yields an inner
approximation. The concave program is solved with a log-barrier interior point
method (damped Newton on each centering problem). ``linear=True`` swaps the
objective for ``sum_l d_l beta_l`` and solves the resulting LP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .lp import LpProblem, solve_lp
from .status import SolveKind, SolveStatus, SolverError

logger = logging.getLogger(__name__)

BETA_FLOOR = 1e-9
GAP_TOL = 1e-9


@dataclass(frozen=True)
class InnerFit:
    center: np.ndarray
    scales: np.ndarray
    objective: float
    iterations: int
    mode: str


def _log_objective(d, beta):
    return float(d @ np.log(np.clip(beta, BETA_FLOOR, 1.0)))


def _interior_start(H, h, HG_abs):
    """Strictly feasible ``(c, beta)`` or a failure status."""
    N = H.shape[1]
    norms = np.linalg.norm(H, axis=1)
    # Chebyshev-style margin: decides emptiness and interior
    cheb = solve_lp(LpProblem(
        c=np.r_[np.zeros(N), -1.0],
        A_ub=np.hstack([H, norms[:, None]]),
        b_ub=h,
        ub=np.r_[np.full(N, np.inf), 1.0],
    ))
    if cheb.kind is not SolveKind.OPTIMAL:
        return None, SolveStatus(SolveKind.NUMERICAL_FAILURE, message=f"interior probe {cheb.kind.value}")
    radius = cheb.solution[-1]
    if radius < -1e-9:
        return None, SolveStatus(SolveKind.INFEASIBLE, message="polytope is empty")
    if radius <= 1e-9:
        return None, SolveStatus(SolveKind.NUMERICAL_FAILURE, message="polytope has no interior; all scales zero")

    p = HG_abs.shape[1]
    grow = HG_abs @ np.ones(p) + 1.0
    tau_lp = solve_lp(LpProblem(
        c=np.r_[np.zeros(N), -1.0],
        A_ub=np.hstack([H, grow[:, None]]),
        b_ub=h,
        ub=np.r_[np.full(N, np.inf), 0.5],
    ))
    if tau_lp.kind is not SolveKind.OPTIMAL or tau_lp.solution[-1] <= 0.0:
        return None, SolveStatus(SolveKind.NUMERICAL_FAILURE, message="no strictly feasible scales")
    tau = tau_lp.solution[-1]
    return (tau_lp.solution[:N], np.full(p, 0.5 * tau)), None


def _barrier_solve(H, h, HG_abs, d, c0, b0, max_newton=200):
    N = H.shape[1]
    p = HG_abs.shape[1]
    A1 = np.hstack([H, HG_abs])
    z = np.r_[c0, b0]
    m_b = A1.shape[0] + 2 * p
    t = 1.0
    total = 0

    def slacks(z):
        beta = z[N:]
        return h - A1 @ z, 1.0 - beta, beta

    def phi(z, t):
        s1, s2, s3 = slacks(z)
        if s1.min() <= 0 or s2.min() <= 0 or s3.min() <= 0:
            return np.inf
        return -t * (d @ np.log(s3)) - np.log(s1).sum() - np.log(s2).sum() - np.log(s3).sum()

    while True:
        for _ in range(max_newton):
            total += 1
            s1, s2, s3 = slacks(z)
            grad = A1.T @ (1.0 / s1)
            grad[N:] += 1.0 / s2 - 1.0 / s3 - t * d / s3
            hess = (A1.T * (1.0 / s1**2)) @ A1
            hess[N:, N:] += np.diag(1.0 / s2**2 + 1.0 / s3**2 + t * d / s3**2)
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            decrement = float(-grad @ step)
            if decrement <= 1e-12:
                break
            f0 = phi(z, t)
            alpha = 1.0
            while alpha > 1e-16:
                cand = z + alpha * step
                f1 = phi(cand, t)
                if np.isfinite(f1) and f1 <= f0 - 0.01 * alpha * decrement:
                    break
                alpha *= 0.5
            else:
                break
            z = cand
        if m_b / t < GAP_TOL:
            break
        t *= 20.0
    return z[:N], z[N:], total


def solve_weighted_log(template_G, weights, H, h, linear: bool = False) -> InnerFit:
    """Fit ``Z(c, G diag(beta))`` inside ``{z : H z <= h}``.

    Raises :class:`SolverError` with kind ``infeasible`` for an empty polytope
    and ``numerical_failure`` when no strictly positive scales exist.
    """
    G = np.atleast_2d(np.asarray(template_G, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    h = np.asarray(h, dtype=float).reshape(-1)
    N, p = G.shape
    d = np.ones(p) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if H.shape[1] != N or H.shape[0] != h.shape[0]:
        raise ValueError("polytope and template dimensions disagree")
    if d.shape[0] != p or np.any(d < 0):
        raise ValueError("weights must be non-negative, one per generator")
    if p == 0 or np.any(np.linalg.norm(G, axis=0) <= 1e-12):
        raise SolverError(SolveStatus(SolveKind.NUMERICAL_FAILURE, message="degenerate template generator"),
                          "weighted-log")
    HG_abs = np.abs(H @ G)

    start, failure = _interior_start(H, h, HG_abs)
    if failure is not None:
        raise SolverError(failure, "weighted-log")

    if linear:
        res = solve_lp(LpProblem(
            c=np.r_[np.zeros(N), -d],
            A_ub=np.hstack([H, HG_abs]),
            b_ub=h,
            lb=np.r_[np.full(N, -np.inf), np.zeros(p)],
            ub=np.r_[np.full(N, np.inf), np.ones(p)],
        ))
        if not res.ok:
            raise SolverError(res, "weighted-log (linear)")
        c, beta = res.solution[:N], np.clip(res.solution[N:], 0.0, 1.0)
        iters = res.iterations
    else:
        c, beta, iters = _barrier_solve(H, h, HG_abs, d, *start)

    viol = H @ c + HG_abs @ beta - h
    if viol.max(initial=-np.inf) > 1e-8 * (1.0 + np.abs(h).max()):
        raise SolverError(SolveStatus(SolveKind.NUMERICAL_FAILURE, message="returned point infeasible"),
                          "weighted-log")
    if np.all(beta <= BETA_FLOOR):
        raise SolverError(SolveStatus(SolveKind.NUMERICAL_FAILURE, message="all scales zero"), "weighted-log")
    return InnerFit(center=c, scales=beta, objective=_log_objective(d, beta), iterations=iters,
                    mode="linear" if linear else "log")
