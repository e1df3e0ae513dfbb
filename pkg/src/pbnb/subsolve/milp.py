"""LP-based branch-and-bound for small mixed-integer models.

Best-bound node selection, most-fractional branching, lowest column index on
ties.  Child LPs are warm-started from the parent's optimal basis, which
stays dual feasible after a bound change.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .lp import LPKernel
from .model import LinearModel, SolveResult, Status

INT_TOL = 1e-8


def _pick_branch(x: np.ndarray, int_idx: np.ndarray) -> int:
    """Most fractional integer column, lowest index on ties; -1 if integral."""
    if int_idx.size == 0:
        return -1
    vals = x[int_idx]
    frac = np.abs(vals - np.round(vals))
    if frac.max() <= INT_TOL:
        return -1
    score = np.minimum(vals - np.floor(vals), np.ceil(vals) - vals)
    best = score.max()
    return int(int_idx[np.flatnonzero(score >= best - 1e-12)[0]])


def solve_milp(model: LinearModel, gap_tol: float = 1e-9, node_limit: int = 100_000,
               kernel: LPKernel | None = None, c=None, lb=None, ub=None,
               basis=None) -> SolveResult:
    """Minimise (or maximise) ``model`` with integrality enforced.

    ``kernel``/``c``/``lb``/``ub``/``basis`` let a caller that re-solves the
    same constraint system with a new objective or new bounds skip the dense
    matrix set-up and start the root from a previous basis.

    On ``node_limit`` exhaustion the status is ``ITERATION_LIMIT`` and the
    result carries the incumbent (if any) and the best remaining bound.
    """
    kernel = kernel or LPKernel(model)
    sign = -1.0 if model.maximize else 1.0
    c = model.c if c is None else np.asarray(c, dtype=float)
    lb = model.lb.copy() if lb is None else np.asarray(lb, dtype=float).copy()
    ub = model.ub.copy() if ub is None else np.asarray(ub, dtype=float).copy()
    int_idx = np.flatnonzero(model.integer)
    # integer bounds are rounded inward once; fractional bounds add nothing
    lb[int_idx] = np.ceil(lb[int_idx] - INT_TOL)
    ub[int_idx] = np.floor(ub[int_idx] + INT_TOL)

    root = kernel.solve(c, lb, ub, basis)
    total_iters = root.iterations
    if root.status is not Status.OPTIMAL:
        return SolveResult(root.status, iterations=total_iters, nodes=1)
    if int_idx.size == 0:
        root.nodes = 1
        return root

    incumbent = None
    inc_val = math.inf  # in minimisation orientation
    seq = 0
    heap = [(sign * root.objective, seq, lb, ub, root)]
    nodes = 1
    best_bound = sign * root.objective

    while heap:
        bound, _, nlb, nub, res = heapq.heappop(heap)
        best_bound = bound
        if incumbent is not None and inc_val - bound <= gap_tol * max(1.0, abs(inc_val)):
            heap.clear()
            break
        j = _pick_branch(res.x, int_idx)
        if j < 0:
            x = res.x.copy()
            x[int_idx] = np.round(x[int_idx])
            val = sign * (float(c @ x) + model.offset)
            if val < inc_val:
                inc_val, incumbent = val, x
            continue
        if nodes >= node_limit:
            heapq.heappush(heap, (bound, seq, nlb, nub, res))
            break
        v = res.x[j]
        for side in (0, 1):
            clb, cub = nlb.copy(), nub.copy()
            if side == 0:
                cub[j] = math.floor(v)
            else:
                clb[j] = math.ceil(v)
            if clb[j] > cub[j]:
                continue
            child = kernel.solve(c, clb, cub, res.basis)
            nodes += 1
            total_iters += child.iterations
            if child.status is Status.UNBOUNDED:
                return SolveResult(Status.UNBOUNDED, iterations=total_iters, nodes=nodes)
            if child.status is not Status.OPTIMAL:
                continue
            cval = sign * child.objective
            if incumbent is not None and cval >= inc_val - gap_tol * max(1.0, abs(inc_val)):
                continue
            seq += 1
            heapq.heappush(heap, (cval, seq, clb, cub, child))

    if heap:
        best_bound = min(best_bound, heap[0][0])
        status = Status.ITERATION_LIMIT
    else:
        status = Status.OPTIMAL if incumbent is not None else Status.INFEASIBLE
        if incumbent is not None:
            best_bound = min(max(best_bound, inc_val - gap_tol * max(1.0, abs(inc_val))), inc_val)
    if incumbent is None:
        return SolveResult(status, bound=sign * best_bound if heap else float("nan"),
                           iterations=total_iters, nodes=nodes)
    return SolveResult(status, sign * inc_val, incumbent, bound=sign * best_bound,
                       iterations=total_iters, nodes=nodes, basis=root.basis)
