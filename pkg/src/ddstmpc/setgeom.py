"""Zonotopes, H-polytopes and matrix zonotopes.

All set values are immutable; every operation returns a new object. Zonotopes
are stored in generator form ``Z(c, G) = {c + G beta : |beta|_inf <= 1}`` and
polytopes in half-space form ``{x : C x <= d}``.

JSON layout (shared with the harness files)::

    zonotope   {"center": [c_1, ..., c_n], "generators": [[g_1], ..., [g_p]]}
    polytope   {"C": [[row_1], ..., [row_q]], "d": [d_1, ..., d_q]}

``generators`` lists generator *vectors* (columns of G), so an empty list is a
single point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .optim.lp import LpProblem, solve_lp
from .optim.status import SolveKind, SolverError

DEFAULT_TOL = 1e-9
CROSS_TOL = 1e-12
PARALLEL_TOL = 1e-10
VERTEX_CAP = 12


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_dim(expected, got, what):
    if expected != got:
        raise ValueError(f"dimension mismatch in {what}: expected {expected}, got {got}")


@dataclass(frozen=True)
class Zonotope:
    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        n = c.shape[0]
        if n < 1:
            raise ValueError("zonotope dimension must be >= 1")
        G = np.asarray(self.generators, dtype=float)
        if G.size == 0:
            G = np.zeros((n, 0))
        G = G.reshape(n, -1) if G.ndim == 1 else G
        if G.shape[0] != n:
            raise ValueError(f"generator matrix has {G.shape[0]} rows, center has length {n}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(G))):
            raise ValueError("zonotope entries must be finite")
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "generators", _frozen(G))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def num_generators(self) -> int:
        return self.generators.shape[1]

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Points ``c + G beta`` with ``beta`` uniform in the unit box, shape (count, n)."""
        beta = rng.uniform(-1.0, 1.0, size=(count, self.num_generators))
        return self.center + beta @ self.generators.T

    def scaled(self, factor: float) -> "Zonotope":
        """Scale about the center."""
        return Zonotope(self.center, factor * self.generators)

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "generators": self.generators.T.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Zonotope":
        c = np.asarray(data["center"], dtype=float)
        gens = np.asarray(data.get("generators", []), dtype=float)
        G = gens.T if gens.size else np.zeros((c.shape[0], 0))
        return cls(c, G)

    @classmethod
    def box(cls, lower, upper) -> "Zonotope":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        return cls(0.5 * (lower + upper), np.diag(0.5 * (upper - lower)))


@dataclass(frozen=True)
class HPolytope:
    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if C.shape[0] < 1:
            raise ValueError("polytope needs at least one half-space")
        if C.shape[0] != d.shape[0]:
            raise ValueError("C and d row counts differ")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(d))):
            raise ValueError("polytope entries must be finite")
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "d", _frozen(d))

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def num_rows(self) -> int:
        return self.C.shape[0]

    def is_empty(self) -> bool:
        """True when no point satisfies ``C x <= d``."""
        res = solve_lp(LpProblem(c=np.zeros(self.dim), A_ub=self.C, b_ub=self.d))
        if res.kind is SolveKind.NUMERICAL_FAILURE:
            raise SolverError(res, "emptiness check")
        return res.kind is SolveKind.INFEASIBLE

    def to_dict(self) -> dict:
        return {"C": self.C.tolist(), "d": self.d.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "HPolytope":
        return cls(data["C"], data["d"])

    @classmethod
    def box(cls, lower, upper) -> "HPolytope":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = lower.shape[0]
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([upper, -lower]))


@dataclass(frozen=True)
class MatrixZonotope:
    """``{C + sum_i beta_i G_i : |beta_i| <= 1}``; generators stacked as (q, n, p)."""

    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.center, dtype=float))
        G = np.asarray(self.generators, dtype=float)
        if G.size == 0:
            G = np.zeros((0,) + C.shape)
        if G.ndim != 3 or G.shape[1:] != C.shape:
            raise ValueError(f"generator matrices must have shape {C.shape}")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(G))):
            raise ValueError("matrix zonotope entries must be finite")
        object.__setattr__(self, "center", _frozen(C))
        object.__setattr__(self, "generators", _frozen(G))

    @property
    def shape(self) -> tuple:
        return self.center.shape

    @property
    def num_generators(self) -> int:
        return self.generators.shape[0]

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        beta = rng.uniform(-1.0, 1.0, size=(count, self.num_generators))
        return self.center + np.einsum("kq,qij->kij", beta, self.generators)

    def as_vector_zonotope(self) -> Zonotope:
        """Row-major flattening into a zonotope over R^(n*p)."""
        return Zonotope(self.center.reshape(-1), self.generators.reshape(self.num_generators, -1).T)


@dataclass(frozen=True)
class VertexModels:
    """Candidate vertex matrices ``[A_i B_i]`` of a model set."""

    matrices: np.ndarray  # (count, n, n + m)

    def __post_init__(self):
        M = np.asarray(self.matrices, dtype=float)
        if M.ndim != 3 or M.shape[0] == 0:
            raise ValueError("vertex model list must be non-empty (count, n, n+m)")
        if M.shape[2] < M.shape[1]:
            raise ValueError("vertex matrices need at least n columns to split into (A, B)")
        object.__setattr__(self, "matrices", _frozen(M))

    @property
    def state_dim(self) -> int:
        return self.matrices.shape[1]

    @property
    def input_dim(self) -> int:
        return self.matrices.shape[2] - self.matrices.shape[1]

    def __len__(self) -> int:
        return self.matrices.shape[0]

    @property
    def vertices(self) -> list:
        n = self.state_dim
        return [(M[:, :n], M[:, n:]) for M in self.matrices]


# ---------------------------------------------------------------- zonotope ops

def minkowski_sum(Z1: Zonotope, Z2: Zonotope) -> Zonotope:
    _check_dim(Z1.dim, Z2.dim, "minkowski_sum")
    return Zonotope(Z1.center + Z2.center, np.hstack([Z1.generators, Z2.generators]))


def linear_map(M, Z: Zonotope) -> Zonotope:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _check_dim(Z.dim, M.shape[1], "linear_map")
    return Zonotope(M @ Z.center, M @ Z.generators)


def support(Z: Zonotope, direction) -> float:
    """Maximum of ``direction @ x`` over ``Z``."""
    direction = np.asarray(direction, dtype=float).reshape(-1)
    _check_dim(Z.dim, direction.shape[0], "support")
    return float(direction @ Z.center + np.abs(direction @ Z.generators).sum())


def support_rows(Z: Zonotope, C) -> np.ndarray:
    """Row-wise support values for every row of ``C``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    _check_dim(Z.dim, C.shape[1], "support_rows")
    return C @ Z.center + np.abs(C @ Z.generators).sum(axis=1)


def project(Z: Zonotope, dims: Sequence[int]) -> Zonotope:
    dims = list(dims)
    if len(set(dims)) != len(dims) or not dims:
        raise ValueError("projection indices must be distinct and non-empty")
    if any(i < 0 or i >= Z.dim for i in dims):
        raise ValueError(f"projection index out of range for dimension {Z.dim}")
    return Zonotope(Z.center[dims], Z.generators[dims])


def _cross_product(M: np.ndarray) -> np.ndarray:
    """Generalized cross product of the n-1 columns of an n x (n-1) matrix."""
    n = M.shape[0]
    out = np.empty(n)
    for j in range(n):
        minor = np.delete(M, j, axis=0)
        out[j] = (-1) ** j * np.linalg.det(minor)
    return out


def zonotope_to_hpoly(Z: Zonotope) -> HPolytope:
    """Exact half-space form of a full-dimensional zonotope."""
    n = Z.dim
    G = Z.generators
    G = G[:, np.linalg.norm(G, axis=0) > CROSS_TOL]  # zero generators add no facets
    p = G.shape[1]
    if p < n - 1 or p == 0 or np.linalg.matrix_rank(G) < n:
        raise ValueError("zonotope is not full-dimensional; half-space form is undefined")
    if n == 1:
        Cbar = np.ones((1, 1))
    else:
        unit = G / np.linalg.norm(G, axis=0)
        normals = []
        for combo in itertools.combinations(range(p), n - 1):
            cp = _cross_product(unit[:, combo])
            norm = np.linalg.norm(cp)
            if norm < CROSS_TOL:
                continue
            normals.append(cp / norm)
        Cbar = np.array(normals)
    delta = np.abs(Cbar @ G).sum(axis=1)
    C = np.vstack([Cbar, -Cbar])
    d = np.concatenate([Cbar @ Z.center + delta, -Cbar @ Z.center + delta])
    return _merge_parallel(C, d)


def _merge_parallel(C, d):
    """Collapse rows with (numerically) identical unit normals, keeping the tighter offset."""
    keep_C, keep_d = [], []
    for row, off in zip(C, d):
        for k, existing in enumerate(keep_C):
            if 1.0 - row @ existing < PARALLEL_TOL:
                keep_d[k] = min(keep_d[k], off)
                break
        else:
            keep_C.append(row)
            keep_d.append(off)
    return HPolytope(np.array(keep_C), np.array(keep_d))


# ---------------------------------------------------------------- polytope ops

def tighten(P: HPolytope, W: Zonotope) -> HPolytope:
    """Pontryagin difference ``P - W`` for a zonotopic ``W`` (exact, same normals)."""
    _check_dim(P.dim, W.dim, "tighten")
    return HPolytope(P.C, P.d - support_rows(W, P.C))


def remove_redundant_rows(P: HPolytope, tol: float = DEFAULT_TOL) -> HPolytope:
    """Drop rows implied by the others (one LP per row)."""
    C, d = P.C, P.d
    norms = np.linalg.norm(C, axis=1)
    nonzero = norms > 0
    if np.any(~nonzero & (d < 0)):
        return P  # a 0 <= negative row: empty, leave untouched
    C, d, norms = C[nonzero], d[nonzero], norms[nonzero]
    Cn, dn = C / norms[:, None], d / norms
    best: dict = {}
    for i, key in enumerate(map(tuple, np.round(Cn, 10))):
        if key not in best or dn[i] < dn[best[key]]:
            best[key] = i
    keep = np.zeros(len(dn), bool)
    keep[list(best.values())] = True
    idx = list(np.flatnonzero(keep))
    if not idx:
        return P
    i = 0
    while i < len(idx):
        r = idx[i]
        others = [k for k in idx if k != r]
        if not others:
            break
        b_ub = np.concatenate([d[others], [d[r] + 1.0]])
        A_ub = np.vstack([C[others], C[r]])
        res = solve_lp(LpProblem(c=-C[r], A_ub=A_ub, b_ub=b_ub))
        if res.kind is SolveKind.INFEASIBLE:
            return HPolytope(C[idx], d[idx])
        if res.ok and -res.objective_value <= d[r] + tol * (1.0 + abs(d[r])):
            idx.pop(i)
            continue
        i += 1
    return HPolytope(C[idx], d[idx])


def intersect(parts: Iterable[HPolytope], remove_redundant: bool = False) -> HPolytope:
    parts = list(parts)
    if not parts:
        raise ValueError("intersect needs at least one polytope")
    n = parts[0].dim
    for P in parts[1:]:
        _check_dim(n, P.dim, "intersect")
    out = HPolytope(np.vstack([P.C for P in parts]), np.concatenate([P.d for P in parts]))
    return remove_redundant_rows(out) if remove_redundant else out


def contains_point(P: HPolytope, x, tol: float = DEFAULT_TOL) -> bool:
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_dim(P.dim, x.shape[0], "contains_point")
    return bool(np.all(P.C @ x <= P.d + tol))


def zonotope_gauge(Z: Zonotope, x) -> float:
    """Smallest ``t`` with ``x in Z(c, t G)``; ``inf`` when ``x - c`` is outside range(G)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_dim(Z.dim, x.shape[0], "zonotope_gauge")
    p = Z.num_generators
    r = x - Z.center
    if p == 0:
        return 0.0 if np.abs(r).max() <= DEFAULT_TOL else np.inf
    # variables (beta, t): min t  s.t.  G beta = r,  -t <= beta_i <= t
    eye = np.eye(p)
    ones = np.ones((p, 1))
    res = solve_lp(LpProblem(
        c=np.r_[np.zeros(p), 1.0],
        A_ub=np.vstack([np.hstack([eye, -ones]), np.hstack([-eye, -ones])]),
        b_ub=np.zeros(2 * p),
        A_eq=np.hstack([Z.generators, np.zeros((Z.dim, 1))]),
        b_eq=r,
    ))
    if res.kind is SolveKind.INFEASIBLE:
        return np.inf
    if not res.ok:
        raise SolverError(res, "zonotope membership")
    return float(res.objective_value)


def zonotope_contains_point(Z: Zonotope, x, tol: float = DEFAULT_TOL) -> bool:
    return zonotope_gauge(Z, x) <= 1.0 + tol


def zonotope_in_hpoly(Z: Zonotope, P: HPolytope, tol: float = DEFAULT_TOL) -> bool:
    """Exact containment test via row-wise support values."""
    _check_dim(P.dim, Z.dim, "zonotope_in_hpoly")
    return bool(np.all(support_rows(Z, P.C) <= P.d + tol))


def polygon_vertices(Z: Zonotope) -> np.ndarray:
    """Counter-clockwise vertices of a planar zonotope."""
    if Z.dim != 2:
        raise ValueError("polygon_vertices needs a 2-D zonotope")
    G = Z.generators[:, np.linalg.norm(Z.generators, axis=0) > 0]
    if G.shape[1] == 0:
        return Z.center[None, :].copy()
    G = np.where(G[1] < 0, -G, G)  # point every generator into the upper half-plane
    G = np.where((G[1] == 0) & (G[0] < 0), -G, G)
    G = G[:, np.argsort(np.arctan2(G[1], G[0]), kind="stable")]
    start = Z.center - G.sum(axis=1)
    edges = np.hstack([2 * G, -2 * G])
    return start + np.vstack([np.zeros(2), np.cumsum(edges.T, axis=0)[:-1]])


def polygon_area(vertices: np.ndarray) -> float:
    if vertices.shape[0] < 3:
        return 0.0
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * abs(x @ np.roll(y, -1) - y @ np.roll(x, -1))


# ---------------------------------------------------------------- matrix zonotopes

def matrix_zonotope_contains(MZ: MatrixZonotope, M, tol: float = DEFAULT_TOL) -> bool:
    M = np.asarray(M, dtype=float)
    if M.shape != MZ.shape:
        raise ValueError(f"matrix shape {M.shape} differs from {MZ.shape}")
    return zonotope_contains_point(MZ.as_vector_zonotope(), M.reshape(-1), tol)


def reduce_order(MZ: MatrixZonotope, target_generators: int) -> MatrixZonotope:
    """Over-approximate with fewer generators.

    Keeps the ``target - n*p`` largest generators (Frobenius norm) and encloses
    the rest in their entrywise interval hull, one axis generator per nonzero
    entry. The result has at most ``max(target, n*p)`` generators.
    """
    if target_generators < 1:
        raise ValueError("target generator count must be >= 1")
    q = MZ.num_generators
    if q <= target_generators:
        return MZ
    entries = MZ.center.size
    keep = max(target_generators - entries, 0)
    norms = np.linalg.norm(MZ.generators.reshape(q, -1), axis=1)
    order = np.argsort(-norms, kind="stable")
    kept = MZ.generators[np.sort(order[:keep])]
    radius = np.abs(MZ.generators[order[keep:]]).sum(axis=0).reshape(-1)
    box = []
    for k in np.flatnonzero(radius > 0):
        E = np.zeros(entries)
        E[k] = radius[k]
        box.append(E.reshape(MZ.shape))
    gens = np.concatenate([kept, np.array(box).reshape((-1,) + MZ.shape)], axis=0)
    return MatrixZonotope(MZ.center, gens)


def matrix_zonotope_vertices(MZ: MatrixZonotope, cap: int = VERTEX_CAP) -> VertexModels:
    """All ``2^q`` sign combinations ``C + sum s_i G_i`` in lexicographic order (-1 before +1)."""
    q = MZ.num_generators
    if q > cap:
        raise ValueError(f"{q} generators exceeds the vertex-enumeration cap {cap}; reduce_order first")
    if q == 0:
        return VertexModels(MZ.center[None])
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=q)))
    mats = MZ.center + np.einsum("kq,qij->kij", signs, MZ.generators)
    return VertexModels(mats)

