"""Model sets from noisy input-state data.

Trajectories are stacked into ``X_-``, ``U_-`` and ``X_+``; when the stacked
regressor ``[X_-; U_-]`` has full row rank, every ``[A B]`` consistent with the
data and a zonotopic process-noise bound lies in the matrix zonotope

    M_AB = (X_+ - M_w) [X_-; U_-]^dagger,

where ``M_w`` collects one copy of the noise zonotope per sample.

Trajectory CSV layout: header ``t,x_1..x_n,u_1..u_m,traj_id``; one row per
state, the last row of each trajectory carries the terminal state with empty
input cells.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .optim.linalg import RANK_TOL, right_pinv
from .setgeom import (
    DEFAULT_TOL,
    MatrixZonotope,
    VertexModels,
    Zonotope,
    matrix_zonotope_contains,
    matrix_zonotope_vertices,
    reduce_order,
)

DEFAULT_MAX_GENERATORS = 8


@dataclass(frozen=True)
class Trajectory:
    """``N_s`` inputs and the ``N_s + 1`` states they produce."""

    states: np.ndarray  # (N_s + 1, n)
    inputs: np.ndarray  # (N_s, m)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.states, dtype=float))
        U = np.asarray(self.inputs, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if X.shape[0] != U.shape[0] + 1:
            raise ValueError(f"need one more state than inputs, got {X.shape[0]} states and {U.shape[0]} inputs")
        if U.shape[0] < 1:
            raise ValueError("trajectory needs at least one input sample")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(U))):
            raise ValueError("trajectory entries must be finite")
        X.setflags(write=False)
        U.setflags(write=False)
        object.__setattr__(self, "states", X)
        object.__setattr__(self, "inputs", U)

    @property
    def num_samples(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class DataMatrices:
    X_minus: np.ndarray
    X_plus: np.ndarray
    U_minus: np.ndarray

    @property
    def T(self) -> int:
        return self.X_minus.shape[1]

    @property
    def state_dim(self) -> int:
        return self.X_minus.shape[0]

    @property
    def input_dim(self) -> int:
        return self.U_minus.shape[0]

    @property
    def regressor(self) -> np.ndarray:
        return np.vstack([self.X_minus, self.U_minus])


@dataclass(frozen=True)
class ModelSet:
    mz: MatrixZonotope
    disturbance: Zonotope
    reduced: bool = False
    original_generators: int = 0

    @property
    def state_dim(self) -> int:
        return self.mz.shape[0]

    @property
    def input_dim(self) -> int:
        return self.mz.shape[1] - self.mz.shape[0]


def assemble_data(trajs: Sequence[Trajectory]) -> DataMatrices:
    """Stack trajectories column-wise, trajectory by trajectory, time ascending."""
    trajs = list(trajs)
    if not trajs:
        raise ValueError("need at least one trajectory")
    n, m = trajs[0].states.shape[1], trajs[0].inputs.shape[1]
    for tr in trajs:
        if tr.states.shape[1] != n or tr.inputs.shape[1] != m:
            raise ValueError("trajectories have inconsistent state/input dimensions")
    X_minus = np.hstack([tr.states[:-1].T for tr in trajs])
    X_plus = np.hstack([tr.states[1:].T for tr in trajs])
    U_minus = np.hstack([tr.inputs.T for tr in trajs])
    return DataMatrices(X_minus, X_plus, U_minus)


def check_rank(D: DataMatrices) -> bool:
    """Full row rank of ``[X_-; U_-]`` with a threshold relative to the largest singular value."""
    R = D.regressor
    if R.shape[1] < R.shape[0]:
        return False
    s = np.linalg.svd(R, compute_uv=False)
    return bool(s[0] > 0 and s[-1] > RANK_TOL * s[0])


def build_noise_matrix_zonotope(W: Zonotope, T: int) -> MatrixZonotope:
    """One generator per (noise generator i, sample j), ordered ``1 + (i-1) T + (j-1)``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    n, q = W.dim, W.num_generators
    center = np.tile(W.center[:, None], (1, T))
    gens = np.zeros((q * T, n, T))
    for i in range(q):
        for j in range(T):
            gens[i * T + j, :, j] = W.generators[:, i]
    return MatrixZonotope(center, gens)


def compute_model_set(D: DataMatrices, W: Zonotope) -> ModelSet:
    if W.dim != D.state_dim:
        raise ValueError("disturbance dimension differs from state dimension")
    pinv = right_pinv(D.regressor)
    Mw = build_noise_matrix_zonotope(W, D.T)
    center = (D.X_plus - Mw.center) @ pinv
    gens = Mw.generators @ pinv
    return ModelSet(MatrixZonotope(center, gens), W, reduced=False, original_generators=gens.shape[0])


def model_set_contains(ms: ModelSet, AB, tol: float = DEFAULT_TOL) -> bool:
    return matrix_zonotope_contains(ms.mz, AB, tol)


def extract_vertex_models(ms: ModelSet, max_generators: int = DEFAULT_MAX_GENERATORS) -> VertexModels:
    """Reduce the model set to ``max_generators`` then enumerate sign vertices."""
    if max_generators < 1:
        raise ValueError("max_generators must be >= 1")
    return matrix_zonotope_vertices(reduce_order(ms.mz, max_generators))


def reduced_model_set(ms: ModelSet, max_generators: int = DEFAULT_MAX_GENERATORS) -> ModelSet:
    mz = reduce_order(ms.mz, max_generators)
    return ModelSet(mz, ms.disturbance, reduced=mz is not ms.mz, original_generators=ms.mz.num_generators)


# ---------------------------------------------------------------- CSV round trip

def write_trajectories_csv(path, trajs: Sequence[Trajectory]) -> None:
    trajs = list(trajs)
    n, m = trajs[0].states.shape[1], trajs[0].inputs.shape[1]
    header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(m)] + ["traj_id"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for tid, tr in enumerate(trajs):
            for k, x in enumerate(tr.states):
                u = [repr(float(v)) for v in tr.inputs[k]] if k < tr.num_samples else [""] * m
                writer.writerow([k] + [repr(float(v)) for v in x] + u + [tid])


def read_trajectories_csv(path) -> list:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
        ucols = [i for i, h in enumerate(header) if h.startswith("u_")]
        tcol, idcol = header.index("t"), header.index("traj_id")
        rows: dict = {}
        for row in reader:
            if not row:
                continue
            rows.setdefault(row[idcol], []).append(row)
    trajs = []
    for tid in sorted(rows, key=lambda s: int(s)):
        recs = sorted(rows[tid], key=lambda r: int(r[tcol]))
        states = np.array([[float(r[i]) for i in xcols] for r in recs])
        inputs = np.array([[float(r[i]) for i in ucols] for r in recs[:-1]])
        trajs.append(Trajectory(states, inputs.reshape(len(recs) - 1, len(ucols))))
    return trajs
