"""Containers shared by the LP, MILP and QP kernels."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp

LE, GE, EQ = "<=", ">=", "="
SENSES = (LE, GE, EQ)


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"


class SolverError(RuntimeError):
    """Raised when a backend cannot produce any answer."""


class NonConvexError(ValueError):
    """Raised by the QP kernel on negative curvature."""


@dataclass
class LinearModel:
    """min/max c'x + offset  s.t.  A x (senses) rhs,  lb <= x <= ub.

    ``integer`` marks the columns that must take integral values; the LP
    kernel ignores it.
    """

    c: np.ndarray
    A: sp.csr_matrix
    senses: list[str]
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    maximize: bool = False
    offset: float = 0.0
    names: Optional[list[str]] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A = sp.csr_matrix(self.A, shape=(len(self.senses), n), dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.lb = np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.asarray(self.ub, dtype=float).reshape(-1)
        self.integer = np.asarray(self.integer, dtype=bool).reshape(-1)
        if not (self.lb.size == self.ub.size == self.integer.size == n):
            raise ValueError("column arrays disagree in length")
        if self.rhs.size != self.A.shape[0]:
            raise ValueError("rhs length does not match the row count")
        bad = [s for s in self.senses if s not in SENSES]
        if bad:
            raise ValueError(f"unknown constraint sense {bad[0]!r}")
        if np.any(self.integer & ~(np.isfinite(self.lb) & np.isfinite(self.ub))):
            raise ValueError("integer columns need finite bounds")

    @property
    def n_cols(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def with_objective(self, c: np.ndarray, offset: float = 0.0) -> "LinearModel":
        return LinearModel(c, self.A, self.senses, self.rhs, self.lb, self.ub,
                           self.integer, self.maximize, offset, self.names)

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "LinearModel":
        return LinearModel(self.c, self.A, self.senses, self.rhs, lb, ub,
                           self.integer, self.maximize, self.offset, self.names)

    def relaxed(self) -> "LinearModel":
        return LinearModel(self.c, self.A, self.senses, self.rhs, self.lb, self.ub,
                           np.zeros(self.n_cols, dtype=bool), self.maximize,
                           self.offset, self.names)

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.offset

    def max_violation(self, x: np.ndarray) -> float:
        """Largest row, bound or integrality residual at ``x``."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.n_rows:
            act = self.A @ x
            for k, s in enumerate(self.senses):
                r = act[k] - self.rhs[k]
                if s == LE:
                    worst = max(worst, r)
                elif s == GE:
                    worst = max(worst, -r)
                else:
                    worst = max(worst, abs(r))
        worst = max(worst, float(np.max(self.lb - x, initial=0.0)),
                    float(np.max(x - self.ub, initial=0.0)))
        if self.integer.any():
            xi = x[self.integer]
            worst = max(worst, float(np.max(np.abs(xi - np.round(xi)))))
        return worst


@dataclass
class SolveResult:
    status: Status
    objective: float = float("nan")
    x: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    bound: float = float("nan")
    iterations: int = 0
    nodes: int = 0
    basis: object = None
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


class RowBuilder:
    """Collects sparse rows before freezing them into a ``LinearModel``."""

    def __init__(self):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []

    def add(self, coeffs, sense: str, rhs: float) -> int:
        r = len(self.senses)
        for j, v in coeffs:
            if v != 0.0:
                self.rows.append(r)
                self.cols.append(int(j))
                self.vals.append(float(v))
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        return r

    def matrix(self, n_cols: int) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)),
                             shape=(len(self.senses), n_cols))
