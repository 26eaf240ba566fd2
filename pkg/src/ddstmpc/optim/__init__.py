from .linalg import RankConditionError, right_pinv
from .logvol import InnerFit, solve_weighted_log
from .lp import LpProblem, solve_lp
from .qp import QpProblem, solve_qp
from .status import SolveKind, SolveStatus, SolverError

__all__ = [
    "InnerFit",
    "LpProblem",
    "QpProblem",
    "RankConditionError",
    "SolveKind",
    "SolveStatus",
    "SolverError",
    "right_pinv",
    "solve_lp",
    "solve_qp",
    "solve_weighted_log",
]
