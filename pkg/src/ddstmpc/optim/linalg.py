from __future__ import annotations

import numpy as np
from scipy import linalg as sla

RANK_TOL = 1e-10


class RankConditionError(ValueError):
    """The stacked data matrix [X_-; U_-] does not have full row rank."""


def right_pinv(M) -> np.ndarray:
    """Right pseudoinverse ``M.T (M M.T)^-1`` of a full-row-rank matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rows, cols = M.shape
    if rows > cols:
        raise RankConditionError(
            f"matrix is {rows}x{cols}: full row rank (rank == {rows}) impossible with fewer columns")
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[-1] <= RANK_TOL * s[0]:
        rank = int(np.sum(s > RANK_TOL * (s[0] if s.size else 1.0)))
        raise RankConditionError(
            f"data matrix has rank {rank} < {rows}; the rank condition on [X_-; U_-] "
            "(persistency of excitation) is violated")
    gram = sla.cho_factor(M @ M.T)
    return sla.cho_solve(gram, M).T
