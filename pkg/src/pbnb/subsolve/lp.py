from __future__ import annotations

import numpy as np

from .model import LinearModel, SolveResult, Status
from .simplex import Basis, BoundedSimplex


class LPKernel:
    """Keeps the dense working matrix of one model between solves."""

    def __init__(self, model: LinearModel):
        self.model = model
        self.simplex = BoundedSimplex(model.A.toarray(), model.senses, model.rhs,
                                      model.lb, model.ub)

    def solve(self, c=None, lb=None, ub=None, basis: Basis | None = None) -> SolveResult:
        model = self.model
        c = model.c if c is None else np.asarray(c, dtype=float)
        self.simplex.set_bounds(model.lb if lb is None else lb,
                                model.ub if ub is None else ub)
        sign = -1.0 if model.maximize else 1.0
        sol = self.simplex.solve(sign * c, basis)
        if sol.status is not Status.OPTIMAL:
            return SolveResult(sol.status, iterations=sol.iterations)
        obj = sign * sol.objective + model.offset
        return SolveResult(Status.OPTIMAL, obj, sol.x, sign * sol.duals,
                           sign * sol.reduced_costs, bound=obj,
                           iterations=sol.iterations, basis=sol.basis)


def solve_lp(model: LinearModel, basis: Basis | None = None) -> SolveResult:
    """Solve the continuous relaxation of ``model`` (integrality ignored).

    Row duals follow the convention ``d = c - A'y``; for a minimisation a
    binding ``<=`` row has ``y <= 0``.
    """
    return LPKernel(model).solve(basis=basis)
