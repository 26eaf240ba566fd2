"""Solver result container shared by the LP, QP and weighted-log solvers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class SolveKind(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolveStatus:
    """Outcome of a solve.

    ``solution`` and ``objective_value`` are present exactly when ``kind`` is
    ``OPTIMAL``. ``duals`` carries solver-specific multipliers (may be empty).
    """

    kind: SolveKind
    solution: Optional[np.ndarray] = None
    objective_value: Optional[float] = None
    iterations: int = 0
    message: str = ""
    duals: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.kind is SolveKind.OPTIMAL) != (self.solution is not None):
            raise ValueError("solution must be present iff kind is optimal")

    @property
    def ok(self) -> bool:
        return self.kind is SolveKind.OPTIMAL


class SolverError(RuntimeError):
    """Raised by convenience wrappers when a solve does not end optimal."""

    def __init__(self, status: SolveStatus, context: str = ""):
        self.status = status
        msg = f"{context}: " if context else ""
        super().__init__(f"{msg}{status.kind.value} ({status.message})")
