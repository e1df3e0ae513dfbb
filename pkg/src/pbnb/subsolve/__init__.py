"""LP, MILP and convex-QP kernels plus the backend switch."""

from .backend import BuiltIn, External, MilpSession, SolverBackend, get_backend
from .lp import LPKernel, solve_lp
from .milp import solve_milp
from .model import (EQ, GE, LE, LinearModel, NonConvexError, RowBuilder, SolveResult,
                    SolverError, Status)
from .qp import QuadraticModel, solve_qp

__all__ = [
    "BuiltIn", "External", "MilpSession", "SolverBackend", "get_backend",
    "LPKernel", "solve_lp", "solve_milp", "QuadraticModel", "solve_qp",
    "EQ", "GE", "LE", "LinearModel", "NonConvexError", "RowBuilder", "SolveResult",
    "SolverError", "Status",
]
