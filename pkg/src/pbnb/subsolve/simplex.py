"""Dense bounded-variable revised simplex.

Rows are turned into equalities with one slack per row, so the working
matrix is ``[A | I]``.  Every column carries its own ``[lb, ub]``; a
nonbasic column sits at one of its bounds (or at zero when free).

Cold starts run a textbook phase 1 with artificial columns.  Warm starts
take a previous ``Basis``: a primal feasible one goes straight to phase 2,
a dual feasible one (the branch-and-bound case, where only bounds moved) is
repaired with the dual simplex.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .model import EQ, GE, LE, Status

AT_LOWER, AT_UPPER, AT_ZERO = 0, 1, 2

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
BLAND_AFTER = 1000  # consecutive degenerate pivots before switching rules


@dataclass
class Basis:
    basic: np.ndarray  # column index per basis position
    state: np.ndarray  # nonbasic position flag per column

    def copy(self) -> "Basis":
        return Basis(self.basic.copy(), self.state.copy())


@dataclass
class LPSolution:
    status: Status
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None
    reduced_costs: np.ndarray | None
    basis: Basis | None
    iterations: int


class _Singular(Exception):
    pass


def _factor(B: np.ndarray):
    with warnings.catch_warnings():
        warnings.simplefilter("error", LinAlgWarning)
        try:
            lu = lu_factor(B, check_finite=False)
        except (LinAlgWarning, ValueError) as exc:
            raise _Singular from exc
    diag = np.abs(np.diag(lu[0]))
    if diag.size and diag.min() <= 1e-11 * max(1.0, diag.max()):
        raise _Singular
    return lu


class BoundedSimplex:
    """One constraint system, many objective/bound variations."""

    def __init__(self, A: np.ndarray, senses, rhs, lb, ub, max_iter: int | None = None):
        A = np.asarray(A, dtype=float)
        m, n = A.shape
        self.m, self.n = m, n
        self.M = np.hstack([A, np.eye(m)])
        self.b = np.asarray(rhs, dtype=float)
        slack_lb = np.array([0.0 if s in (LE, EQ) else -np.inf for s in senses])
        slack_ub = np.array([0.0 if s in (GE, EQ) else np.inf for s in senses])
        self.lb = np.concatenate([np.asarray(lb, dtype=float), slack_lb])
        self.ub = np.concatenate([np.asarray(ub, dtype=float), slack_ub])
        self.max_iter = max_iter or 50 * (m + n) + 1000

    # ------------------------------------------------------------------ helpers
    def set_bounds(self, lb, ub):
        self.lb[: self.n] = lb
        self.ub[: self.n] = ub

    def _nonbasic_values(self, state, lb, ub):
        x = np.where(state == AT_UPPER, ub, lb)
        free = state == AT_ZERO
        x[free] = 0.0
        # a flagged bound may have become infinite after a bound change
        bad = ~np.isfinite(x)
        if bad.any():
            alt = np.where(state == AT_UPPER, lb, ub)
            x[bad] = np.where(np.isfinite(alt[bad]), alt[bad], 0.0)
            state[bad] = np.where(np.isfinite(alt[bad]),
                                  np.where(state[bad] == AT_UPPER, AT_LOWER, AT_UPPER),
                                  AT_ZERO)
        return x

    @staticmethod
    def _default_state(lb, ub):
        return np.where(np.isfinite(lb), AT_LOWER,
                        np.where(np.isfinite(ub), AT_UPPER, AT_ZERO)).astype(np.int8)

    # ------------------------------------------------------------------ public
    def solve(self, c, basis: Basis | None = None) -> LPSolution:
        c = np.asarray(c, dtype=float)
        cost = np.concatenate([c, np.zeros(self.m)])
        if np.any(self.lb > self.ub + FEAS_TOL):
            return LPSolution(Status.INFEASIBLE, None, np.nan, None, None, None, 0)
        iters = 0
        if basis is not None:
            out = self._warm(cost, basis)
            if out is not None:
                return out
        return self._cold(cost)

    # ------------------------------------------------------------------ starts
    def _warm(self, cost, basis: Basis):
        basic = basis.basic.copy()
        state = basis.state.copy()
        lb, ub = self.lb, self.ub
        x = self._nonbasic_values(state, lb, ub)
        try:
            lu = _factor(self.M[:, basic])
        except _Singular:
            return None
        x[basic] = 0.0
        xb = lu_solve(lu, self.b - self.M @ x)
        x[basic] = xb
        tol = FEAS_TOL * (1.0 + np.abs(xb))
        primal_ok = np.all(xb >= lb[basic] - tol) and np.all(xb <= ub[basic] + tol)
        if primal_ok:
            return self._finish(cost, *self._primal(cost, basic, state, x, 0))
        y = lu_solve(lu, cost[basic], trans=1)
        d = cost - y @ self.M
        nb = np.ones(self.M.shape[1], dtype=bool)
        nb[basic] = False
        movable = nb & (ub > lb)
        bad = movable & (((state == AT_LOWER) & (d < -DUAL_TOL))
                         | ((state == AT_UPPER) & (d > DUAL_TOL))
                         | ((state == AT_ZERO) & (np.abs(d) > DUAL_TOL)))
        if bad.any():
            return None
        status, basic, state, x, it = self._dual(cost, basic, state, x, 0)
        if status is Status.ITERATION_LIMIT:
            return None
        if status is Status.INFEASIBLE:
            return LPSolution(Status.INFEASIBLE, None, np.nan, None, None, None, it)
        return self._finish(cost, status, basic, state, x, it)

    def _cold(self, cost):
        m, N = self.m, self.M.shape[1]
        lb, ub = self.lb, self.ub
        state = self._default_state(lb, ub)
        x = self._nonbasic_values(state, lb, ub)
        n = self.n
        x[n:] = 0.0
        resid = self.b - self.M[:, :n] @ x[:n]
        slack_ok = (resid >= lb[n:] - FEAS_TOL) & (resid <= ub[n:] + FEAS_TOL)
        art_rows = np.flatnonzero(~slack_ok)
        basic = np.arange(n, n + m)
        if art_rows.size == 0:
            x[n:] = resid
            return self._finish(cost, *self._primal(cost, basic, state, x, 0))

        # phase 1 on [A | I | artificials]
        k = art_rows.size
        sign = np.where(resid[art_rows] >= 0.0, 1.0, -1.0)
        art = np.zeros((m, k))
        art[art_rows, np.arange(k)] = sign
        saved = (self.M, self.lb, self.ub)
        self.M = np.hstack([self.M, art])
        self.lb = np.concatenate([lb, np.zeros(k)])
        self.ub = np.concatenate([ub, np.full(k, np.inf)])
        state1 = np.concatenate([state, np.full(k, AT_LOWER, dtype=np.int8)])
        x1 = np.concatenate([x, np.abs(resid[art_rows])])
        basic1 = basic.copy()
        for a, r in enumerate(art_rows):
            basic1[r] = N + a
        x1[n + art_rows] = 0.0
        x1[n + np.flatnonzero(slack_ok)] = resid[slack_ok]
        cost1 = np.concatenate([np.zeros(N), np.ones(k)])
        try:
            status, basic1, state1, x1, it = self._primal(cost1, basic1, state1, x1, 0)
        finally:
            self.M, self.lb, self.ub = saved
        infeas = float(x1[N:].sum())
        if status is Status.ITERATION_LIMIT:
            return LPSolution(Status.ITERATION_LIMIT, None, np.nan, None, None, None, it)
        if infeas > FEAS_TOL * max(1.0, float(np.abs(self.b).max(initial=0.0))):
            return LPSolution(Status.INFEASIBLE, None, np.nan, None, None, None, it)
        # an artificial still basic (at zero) is parallel to its row's slack
        for pos, col in enumerate(basic1):
            if col >= N:
                basic1[pos] = n + art_rows[col - N]
        x = x1[:N]
        state = state1[:N]
        x[basic1] = 0.0
        status, basic, state, x, it2 = self._primal(cost, basic1, state, x, it)
        return self._finish(cost, status, basic, state, x, it2)

    def _finish(self, cost, status, basic, state, x, iters) -> LPSolution:
        if status is not Status.OPTIMAL:
            return LPSolution(status, None, np.nan, None, None, None, iters)
        lu = _factor(self.M[:, basic])
        xn = x.copy()
        xn[basic] = 0.0
        x[basic] = lu_solve(lu, self.b - self.M @ xn)
        y = lu_solve(lu, cost[basic], trans=1)
        d = cost - y @ self.M
        d[basic] = 0.0
        lb, ub = self.lb, self.ub
        with np.errstate(invalid="ignore"):
            near = np.isfinite(lb) & (np.abs(x - lb) <= FEAS_TOL * (1.0 + np.abs(lb)))
            x[near] = lb[near]
            near = np.isfinite(ub) & (np.abs(x - ub) <= FEAS_TOL * (1.0 + np.abs(ub)))
            x[near] = ub[near]
        n = self.n
        obj = float(cost[:n] @ x[:n])
        return LPSolution(Status.OPTIMAL, x[:n].copy(), obj, y, d[:n].copy(),
                          Basis(basic.copy(), state.copy()), iters)

    # ------------------------------------------------------------------ loops
    def _primal(self, cost, basic, state, x, iters):
        M, b, lb, ub = self.M, self.b, self.lb, self.ub
        N = M.shape[1]
        is_basic = np.zeros(N, dtype=bool)
        is_basic[basic] = True
        movable = ub > lb
        degenerate = 0
        bland = False
        while True:
            if iters >= self.max_iter:
                return Status.ITERATION_LIMIT, basic, state, x, iters
            try:
                lu = _factor(M[:, basic])
            except _Singular:
                return Status.ITERATION_LIMIT, basic, state, x, iters
            x[basic] = 0.0
            xb = lu_solve(lu, b - M @ x)
            x[basic] = xb
            y = lu_solve(lu, cost[basic], trans=1)
            d = cost - y @ M
            nb = ~is_basic & movable
            inc = nb & (state != AT_UPPER) & (d < -DUAL_TOL)
            dec = nb & (state != AT_LOWER) & (d > DUAL_TOL)
            elig = inc | dec
            if not elig.any():
                return Status.OPTIMAL, basic, state, x, iters
            if bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                q = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            direction = 1.0 if inc[q] else -1.0
            alpha = lu_solve(lu, M[:, q])
            delta = direction * alpha
            lbb, ubb = lb[basic], ub[basic]
            with np.errstate(divide="ignore", invalid="ignore"):
                lim = np.full(basic.size, np.inf)
                down = delta > PIVOT_TOL
                lim[down] = (xb[down] - lbb[down]) / delta[down]
                up = delta < -PIVOT_TOL
                lim[up] = (ubb[up] - xb[up]) / (-delta[up])
            lim = np.maximum(lim, 0.0)
            t = float(lim.min()) if lim.size else np.inf
            t_flip = ub[q] - lb[q]
            iters += 1
            if t_flip <= t:
                if not np.isfinite(t_flip):
                    return Status.UNBOUNDED, basic, state, x, iters
                state[q] = AT_UPPER if direction > 0 else AT_LOWER
                x[q] = ub[q] if direction > 0 else lb[q]
                degenerate = 0
                continue
            ties = np.flatnonzero(lim <= t + 1e-12)
            if bland:
                r = int(ties[np.argmin(basic[ties])])
            else:
                r = int(ties[np.argmax(np.abs(delta[ties]))])
            leaving = basic[r]
            state[leaving] = AT_LOWER if delta[r] > 0 else AT_UPPER
            x[leaving] = lb[leaving] if delta[r] > 0 else ub[leaving]
            if not np.isfinite(x[leaving]):
                x[leaving] = 0.0
                state[leaving] = AT_ZERO
            x[q] = x[q] + direction * t
            is_basic[leaving] = False
            is_basic[q] = True
            basic[r] = q
            state[q] = AT_LOWER
            degenerate = degenerate + 1 if t <= 1e-12 else 0
            if degenerate >= BLAND_AFTER:
                bland = True

    def _dual(self, cost, basic, state, x, iters):
        M, b, lb, ub = self.M, self.b, self.lb, self.ub
        N = M.shape[1]
        m = self.m
        is_basic = np.zeros(N, dtype=bool)
        is_basic[basic] = True
        movable = ub > lb
        while True:
            if iters >= self.max_iter:
                return Status.ITERATION_LIMIT, basic, state, x, iters
            try:
                lu = _factor(M[:, basic])
            except _Singular:
                return Status.ITERATION_LIMIT, basic, state, x, iters
            x[basic] = 0.0
            xb = lu_solve(lu, b - M @ x)
            x[basic] = xb
            lbb, ubb = lb[basic], ub[basic]
            below = lbb - xb
            above = xb - ubb
            tol = FEAS_TOL * (1.0 + np.abs(xb))
            viol = np.maximum(np.where(below > tol, below, 0.0), np.where(above > tol, above, 0.0))
            if not np.any(viol > 0):
                return Status.OPTIMAL, basic, state, x, iters
            r = int(np.argmax(viol))
            to_lower = below[r] > 0
            y = lu_solve(lu, cost[basic], trans=1)
            d = cost - y @ M
            e = np.zeros(m)
            e[r] = 1.0
            rho = lu_solve(lu, e, trans=1)
            arow = rho @ M
            nb = ~is_basic & movable
            if to_lower:
                elig = nb & (((state != AT_UPPER) & (arow < -PIVOT_TOL))
                             | ((state != AT_LOWER) & (arow > PIVOT_TOL)))
            else:
                elig = nb & (((state != AT_UPPER) & (arow > PIVOT_TOL))
                             | ((state != AT_LOWER) & (arow < -PIVOT_TOL)))
            iters += 1
            if not elig.any():
                return Status.INFEASIBLE, basic, state, x, iters
            idx = np.flatnonzero(elig)
            ratios = np.abs(d[idx]) / np.abs(arow[idx])
            best = ratios.min()
            ties = idx[ratios <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(arow[ties]))])
            target = lbb[r] if to_lower else ubb[r]
            step = (xb[r] - target) / arow[q]
            leaving = basic[r]
            x[q] = x[q] + step
            x[leaving] = target
            state[leaving] = AT_LOWER if to_lower else AT_UPPER
            is_basic[leaving] = False
            is_basic[q] = True
            basic[r] = q
            state[q] = AT_LOWER
