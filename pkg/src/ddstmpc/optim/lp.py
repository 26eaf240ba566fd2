"""Dense two-phase simplex for small linear programs.

Problems arrive in the general form

    minimize    c @ x
    subject to  A_ub @ x <= b_ub,  A_eq @ x == b_eq,  lb <= x <= ub

and are rewritten as ``G x <= h, E x = f`` with ``x`` free. The LP dual of that
form is a standard-form problem with one equality row per primal variable:

    minimize  h @ y + f @ z   s.t.  G.T @ y + E.T @ z = -c,  y >= 0

The tableau therefore has as many rows as the primal has variables, which
keeps the many-rows / few-variables problems produced by set intersections
cheap. The primal optimum is read back as the simplex multipliers of the dual.
Bland's rule is used in both phases so degenerate problems cannot cycle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .status import SolveKind, SolveStatus

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-8
KKT_TOL = 1e-7


def _as_matrix(a, ncols, name):
    if a is None:
        return np.zeros((0, ncols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, ncols))
    if a.shape[1] != ncols:
        raise ValueError(f"{name} has {a.shape[1]} columns, expected {ncols}")
    return a


def _as_vector(b, length, name):
    if b is None:
        b = np.zeros(0)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != length:
        raise ValueError(f"{name} has length {b.shape[0]}, expected {length}")
    return b


@dataclass(frozen=True)
class LpProblem:
    """``min c@x  s.t.  A_ub x <= b_ub, A_eq x == b_eq, lb <= x <= ub``.

    Missing bounds mean the variable is free.
    """

    c: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.shape[0]
        if n == 0:
            raise ValueError("LP needs at least one variable")
        A_ub = _as_matrix(self.A_ub, n, "A_ub")
        b_ub = _as_vector(self.b_ub, A_ub.shape[0], "b_ub")
        A_eq = _as_matrix(self.A_eq, n, "A_eq")
        b_eq = _as_vector(self.b_eq, A_eq.shape[0], "b_eq")
        lb = np.full(n, -np.inf) if self.lb is None else _as_vector(self.lb, n, "lb")
        ub = np.full(n, np.inf) if self.ub is None else _as_vector(self.ub, n, "ub")
        for name, arr in (("c", c), ("A_ub", A_ub), ("b_ub", b_ub), ("A_eq", A_eq), ("b_eq", b_eq)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if np.any(np.isnan(lb)) or np.any(np.isnan(ub)) or np.any(lb > ub):
            raise ValueError("invalid variable bounds")
        if A_ub.shape[0] + A_eq.shape[0] == 0 and not (np.isfinite(lb).any() or np.isfinite(ub).any()):
            raise ValueError("LP has neither constraints nor finite bounds")
        for name, arr in (("c", c), ("A_ub", A_ub), ("b_ub", b_ub), ("A_eq", A_eq),
                          ("b_eq", b_eq), ("lb", lb), ("ub", ub)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    def inequality_form(self):
        """Return ``(G, h, E, f)`` with bounds folded into ``G x <= h``."""
        n = self.num_vars
        eye = np.eye(n)
        hi = np.isfinite(self.ub)
        lo = np.isfinite(self.lb)
        G = np.vstack([self.A_ub, eye[hi], -eye[lo]])
        h = np.concatenate([self.b_ub, self.ub[hi], -self.lb[lo]])
        return G, h, self.A_eq, self.b_eq

    def to_text(self) -> str:
        """Plain-text LP-style dump for inspection."""

        def expr(row):
            terms = [f"{v:+.17g} x{j}" for j, v in enumerate(row) if v != 0.0]
            return " ".join(terms) if terms else "0"

        lines = ["minimize", f"  obj: {expr(self.c)}", "subject to"]
        for i, (row, rhs) in enumerate(zip(self.A_ub, self.b_ub)):
            lines.append(f"  ub{i}: {expr(row)} <= {rhs:.17g}")
        for i, (row, rhs) in enumerate(zip(self.A_eq, self.b_eq)):
            lines.append(f"  eq{i}: {expr(row)} = {rhs:.17g}")
        lines.append("bounds")
        for j, (lo, hi) in enumerate(zip(self.lb, self.ub)):
            lines.append(f"  {lo:.17g} <= x{j} <= {hi:.17g}")
        lines.append("end")
        return "\n".join(lines)


@dataclass
class _StandardResult:
    kind: SolveKind
    v: Optional[np.ndarray] = None
    pi: Optional[np.ndarray] = None
    iterations: int = 0


def _pivot(T, rhs, r, e):
    piv = T[r, e]
    T[r] /= piv
    rhs[r] /= piv
    col = T[:, e].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    rhs -= col * rhs[r]
    T[:, e] = 0.0
    T[r, e] = 1.0


def _reinvert(T, rhs, basis, A_full, b_full):
    """Rebuild the tableau from the current basis to remove accumulated drift."""
    B = A_full[:, basis]
    try:
        T[:] = np.linalg.solve(B, A_full)
        rhs[:] = np.linalg.solve(B, b_full)
    except np.linalg.LinAlgError:
        return False
    return True


def _bland_iterations(T, rhs, basis, cost, n_real, max_iter, rc_tol, A_full, b_full,
                      reinvert_every=40):
    """Run Bland-rule pivots in place. Returns (kind, iterations)."""
    since = 0
    for it in range(max_iter):
        if since >= reinvert_every:
            _reinvert(T, rhs, basis, A_full, b_full)
            since = 0
        reduced = cost[:n_real] - cost[basis] @ T[:, :n_real]
        candidates = np.flatnonzero(reduced < -rc_tol)
        if candidates.size == 0:
            if since == 0:
                return SolveKind.OPTIMAL, it
            # confirm optimality on a freshly inverted tableau
            _reinvert(T, rhs, basis, A_full, b_full)
            since = 0
            reduced = cost[:n_real] - cost[basis] @ T[:, :n_real]
            candidates = np.flatnonzero(reduced < -rc_tol)
            if candidates.size == 0:
                return SolveKind.OPTIMAL, it
        e = candidates[0]
        col = T[:, e]
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            return SolveKind.UNBOUNDED, it
        ratios = np.maximum(rhs[pos], 0.0) / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = ties[np.argmin(basis[ties])]
        _pivot(T, rhs, r, e)
        basis[r] = e
        since += 1
    return SolveKind.NUMERICAL_FAILURE, max_iter


def simplex_standard_form(A, b, cost, max_iter=None) -> _StandardResult:
    """Two-phase simplex for ``min cost@v s.t. A v = b, v >= 0``.

    Returns the basic optimum ``v`` and the simplex multipliers ``pi``
    (an optimal solution of ``max b@pi s.t. A.T pi <= cost``).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, nv = A.shape
    if max_iter is None:
        max_iter = 50 * (m + nv) + 1000
    sign = np.where(b < 0, -1.0, 1.0)
    T = np.hstack([A * sign[:, None], np.eye(m)])
    rhs = b * sign
    A_full, b_full = T.copy(), rhs.copy()
    basis = np.arange(nv, nv + m)
    scale_b = 1.0 + np.abs(b).max(initial=0.0)

    cost1 = np.concatenate([np.zeros(nv), np.ones(m)])
    kind, it1 = _bland_iterations(T, rhs, basis, cost1, nv, max_iter, 1e-11, A_full, b_full)
    if kind is not SolveKind.OPTIMAL:
        return _StandardResult(SolveKind.NUMERICAL_FAILURE, iterations=it1)
    if cost1[basis] @ rhs > 1e-9 * scale_b:
        return _StandardResult(SolveKind.INFEASIBLE, iterations=it1)

    # drive zero-level artificials out of the basis where a real pivot exists
    for r in range(m):
        if basis[r] >= nv:
            row = np.abs(T[r, :nv])
            j = int(np.argmax(row)) if nv else 0
            if nv and row[j] > 1e-9:
                _pivot(T, rhs, r, j)
                basis[r] = j

    cost2 = np.concatenate([cost, np.zeros(m)])
    rc_tol = 1e-10 * (1.0 + np.abs(cost).max(initial=0.0))
    kind, it2 = _bland_iterations(T, rhs, basis, cost2, nv, max_iter - it1, rc_tol, A_full, b_full)
    iterations = it1 + it2
    if kind is not SolveKind.OPTIMAL:
        return _StandardResult(kind, iterations=iterations)

    B = np.zeros((m, m))
    for k, j in enumerate(basis):
        if j < nv:
            B[:, k] = A[:, j]
        else:
            B[j - nv, k] = sign[j - nv]
    try:
        vB = np.linalg.solve(B, b)
        pi = np.linalg.solve(B.T, cost2[basis])
    except np.linalg.LinAlgError:
        vB = rhs.copy()
        pi = sign * (cost2[basis] @ T[:, nv:])
    v = np.zeros(nv + m)
    v[basis] = np.maximum(vB, 0.0)
    return _StandardResult(SolveKind.OPTIMAL, v=v[:nv], pi=pi, iterations=iterations)


def _inv_norm(norms):
    return np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)


def _feasibility_probe(G, h, E, f, max_iter) -> SolveKind:
    """Decide feasibility of ``G x <= h, E x = f`` (used when the dual is infeasible)."""
    n = G.shape[1]
    c = np.zeros(n + 1)
    c[-1] = 1.0
    Gs = np.hstack([G, -np.ones((G.shape[0], 1))])
    probe = LpProblem(
        c=c,
        A_ub=Gs,
        b_ub=h,
        A_eq=np.hstack([E, np.zeros((E.shape[0], 1))]) if E.shape[0] else None,
        b_eq=f if E.shape[0] else None,
        lb=np.concatenate([np.full(n, -np.inf), [-1.0]]),
    )
    res = _solve(probe, max_iter, probe_allowed=False)
    if res.kind is SolveKind.OPTIMAL:
        return SolveKind.UNBOUNDED if res.objective_value <= FEAS_TOL else SolveKind.INFEASIBLE
    if res.kind is SolveKind.INFEASIBLE:
        return SolveKind.INFEASIBLE
    return SolveKind.NUMERICAL_FAILURE


def _solve(problem: LpProblem, max_iter, probe_allowed=True) -> SolveStatus:
    G, h, E, f = problem.inequality_form()
    c = problem.c
    M, Me = G.shape[0], E.shape[0]

    # equilibrate: unit inf-norm rows, then unit inf-norm variable columns
    rg = _inv_norm(np.abs(G).max(axis=1, initial=0.0))
    re = _inv_norm(np.abs(E).max(axis=1, initial=0.0))
    Gs, hs, Es, fs = G * rg[:, None], h * rg, E * re[:, None], f * re
    col = _inv_norm(np.abs(np.vstack([Gs, Es])).max(axis=0, initial=0.0))
    Gs, Es, cs = Gs * col, Es * col, c * col

    A_hat = np.hstack([Gs.T, Es.T, -Es.T])
    res = simplex_standard_form(A_hat, -cs, np.concatenate([hs, fs, -fs]), max_iter)
    if res.kind is SolveKind.UNBOUNDED:
        return SolveStatus(SolveKind.INFEASIBLE, iterations=res.iterations, message="dual unbounded")
    if res.kind is SolveKind.INFEASIBLE:
        if not probe_allowed:
            return SolveStatus(SolveKind.NUMERICAL_FAILURE, iterations=res.iterations,
                               message="feasibility probe has infeasible dual")
        kind = _feasibility_probe(G, h, E, f, max_iter)
        return SolveStatus(kind, iterations=res.iterations, message="dual infeasible")
    if res.kind is not SolveKind.OPTIMAL:
        return SolveStatus(SolveKind.NUMERICAL_FAILURE, iterations=res.iterations,
                           message="iteration cap reached")

    x = res.pi * col
    y = res.v[:M] * rg
    z = (res.v[M:M + Me] - res.v[M + Me:]) * re
    viol = G @ x - h
    eq_res = E @ x - f
    stat = c + G.T @ y + E.T @ z
    feas_ok = np.all(viol <= FEAS_TOL * (1.0 + np.abs(h))) and np.all(
        np.abs(eq_res) <= FEAS_TOL * (1.0 + np.abs(f)))
    kkt_ok = np.abs(stat).max(initial=0.0) <= KKT_TOL * (1.0 + np.abs(c).max())
    if not (feas_ok and kkt_ok):
        logger.debug("LP self-check failed: viol=%g eq=%g stat=%g", viol.max(initial=0.0),
                     np.abs(eq_res).max(initial=0.0), np.abs(stat).max(initial=0.0))
        return SolveStatus(SolveKind.NUMERICAL_FAILURE, iterations=res.iterations,
                           message="optimality self-check failed")
    return SolveStatus(
        SolveKind.OPTIMAL,
        solution=x,
        objective_value=float(c @ x),
        iterations=res.iterations,
        duals={"ineq": y, "eq": z},
    )


def solve_lp(problem: LpProblem, max_iter: Optional[int] = None) -> SolveStatus:
    """Solve a dense LP and classify it as optimal, infeasible or unbounded."""
    return _solve(problem, max_iter)
