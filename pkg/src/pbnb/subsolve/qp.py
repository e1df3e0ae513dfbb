"""Primal active-set method for small convex QPs.

    min 1/2 x'Hx + g'x + offset
    s.t. A_eq x = b_eq,  A_in x <= b_in,  lb <= x <= ub

``H`` only needs to be positive semidefinite.  Each iteration works in the
null space of the working set; a zero-curvature descent direction is
followed as a ray until a constraint blocks it, a positive-curvature one
takes the Newton step.  Bound constraints live in the working set as fixed
columns, so problems with many simple bounds and few free variables (convex
weights over a vertex set) stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .model import NonConvexError, SolveResult, Status
from .simplex import BoundedSimplex

_STEP_TOL = 1e-12
_MULT_TOL = 1e-10


@dataclass
class QuadraticModel:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        n = self.g.size
        self.H = np.asarray(self.H, dtype=float).reshape(n, n)
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.asarray(self.A_eq, float).reshape(-1, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, float).reshape(-1)
        self.A_in = np.zeros((0, n)) if self.A_in is None else np.asarray(self.A_in, float).reshape(-1, n)
        self.b_in = np.zeros(0) if self.b_in is None else np.asarray(self.b_in, float).reshape(-1)
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, float).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, float).copy()

    @property
    def n(self) -> int:
        return self.g.size

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x + self.offset)

    def max_violation(self, x) -> float:
        worst = 0.0
        if self.b_eq.size:
            worst = max(worst, float(np.abs(self.A_eq @ x - self.b_eq).max()))
        if self.b_in.size:
            worst = max(worst, float((self.A_in @ x - self.b_in).max()))
        return max(worst, float(np.max(self.lb - x, initial=0.0)),
                   float(np.max(x - self.ub, initial=0.0)))


def _feasible_point(qp: QuadraticModel):
    A = np.vstack([qp.A_eq, qp.A_in])
    senses = ["="] * qp.b_eq.size + ["<="] * qp.b_in.size
    rhs = np.concatenate([qp.b_eq, qp.b_in])
    sol = BoundedSimplex(A, senses, rhs, qp.lb, qp.ub).solve(np.zeros(qp.n))
    return sol.x if sol.status is Status.OPTIMAL else None


def solve_qp(qp: QuadraticModel, x0=None, max_iter: int | None = None,
             feas_tol: float = 1e-9) -> SolveResult:
    """Minimise a convex quadratic over a polyhedron.

    ``x0`` must be feasible if given (checked); otherwise a vertex is found
    with the simplex phase 1.  ``duals`` holds the multipliers of the
    equality rows followed by those of the inequality rows (>= 0).
    Raises ``NonConvexError`` when ``H`` has negative curvature.
    """
    n = qp.n
    H = 0.5 * (qp.H + qp.H.T)
    if n:
        eig = np.linalg.eigvalsh(H)
        if eig.min() < -1e-9 * max(1.0, float(np.abs(eig).max())):
            raise NonConvexError(f"Hessian has eigenvalue {eig.min():.3e}")
    lb, ub = qp.lb, qp.ub
    A_eq, b_eq, A_in, b_in = qp.A_eq, qp.b_eq, qp.A_in, qp.b_in
    if x0 is not None:
        x = np.asarray(x0, dtype=float).copy()
        if qp.max_violation(x) > feas_tol * 10:
            x = None
    else:
        x = None
    if x is None:
        x = _feasible_point(qp)
        if x is None:
            return SolveResult(Status.INFEASIBLE)
    x = np.clip(x, lb, ub)

    scale = 1.0 + np.abs(x)
    fixed = np.zeros(n, dtype=np.int8)  # -1 at lower, +1 at upper
    permanent = lb == ub
    fixed[permanent] = -1
    fixed[(np.abs(x - lb) <= feas_tol * scale) & ~permanent] = -1
    fixed[(np.abs(x - ub) <= feas_tol * scale) & ~permanent & (fixed == 0)] = 1
    work: list[int] = []
    max_iter = max_iter or 60 * (n + b_in.size) + 500
    curv_tol = 1e-12 * max(1.0, float(np.abs(H).max(initial=0.0)))

    it = 0
    status = Status.ITERATION_LIMIT
    nu = np.zeros(b_eq.size + len(work))
    while it < max_iter:
        it += 1
        free = fixed == 0
        grad = H @ x + qp.g
        C = np.vstack([A_eq, A_in[work]]) if work else A_eq
        Cf = C[:, free]
        gf = grad[free]
        Z = null_space(Cf, rcond=1e-11) if Cf.shape[0] else np.eye(int(free.sum()))
        step = None
        ray = False
        if Z.shape[1]:
            gr = Z.T @ gf
            Hr = Z.T @ H[np.ix_(free, free)] @ Z
            w, V = np.linalg.eigh(0.5 * (Hr + Hr.T))
            coeff = V.T @ gr
            flat = w <= curv_tol
            gscale = 1e-12 * (1.0 + np.abs(grad).max(initial=0.0))
            if flat.any() and np.linalg.norm(coeff[flat]) > gscale:
                step = -(Z @ (V[:, flat] @ coeff[flat]))
                ray = True
            elif (~flat).any():
                step = -(Z @ (V[:, ~flat] @ (coeff[~flat] / w[~flat])))
        if step is not None and np.abs(step).max() > _STEP_TOL * (1.0 + np.abs(x).max()):
            p = np.zeros(n)
            p[free] = step
            t = np.inf if ray else 1.0
            block = None
            if b_in.size:
                Ap = A_in @ p
                slack = b_in - A_in @ x
                cand = Ap > 1e-12 * (1.0 + np.abs(A_in).max())
                if work:
                    cand[work] = False
                if cand.any():
                    idx = np.flatnonzero(cand)
                    r = np.maximum(slack[idx], 0.0) / Ap[idx]
                    k = int(np.argmin(r))
                    if r[k] < t:
                        t, block = float(r[k]), ("row", int(idx[k]))
            dn = free & (p < -1e-15) & np.isfinite(lb)
            if dn.any():
                idx = np.flatnonzero(dn)
                r = np.maximum(x[idx] - lb[idx], 0.0) / -p[idx]
                k = int(np.argmin(r))
                if r[k] < t:
                    t, block = float(r[k]), ("lo", int(idx[k]))
            up = free & (p > 1e-15) & np.isfinite(ub)
            if up.any():
                idx = np.flatnonzero(up)
                r = np.maximum(ub[idx] - x[idx], 0.0) / p[idx]
                k = int(np.argmin(r))
                if r[k] < t:
                    t, block = float(r[k]), ("hi", int(idx[k]))
            if not np.isfinite(t):
                status = Status.UNBOUNDED
                break
            x = x + t * p
            if block is not None:
                kind, k = block
                if kind == "row":
                    work.append(k)
                elif kind == "lo":
                    fixed[k] = -1
                    x[k] = lb[k]
                else:
                    fixed[k] = 1
                    x[k] = ub[k]
            continue

        # stationary on the working set: inspect multipliers
        if C.shape[0]:
            nu = np.linalg.lstsq(Cf.T, -gf, rcond=None)[0] if free.any() else np.zeros(C.shape[0])
        else:
            nu = np.zeros(0)
        n_eq = b_eq.size
        worst, drop = -_MULT_TOL * (1.0 + np.abs(grad).max(initial=0.0)), None
        for pos, row in enumerate(work):
            if nu[n_eq + pos] < worst:
                worst, drop = nu[n_eq + pos], ("row", pos)
        if (fixed != 0).any():
            red = grad + (C.T @ nu if C.shape[0] else 0.0)
            for j in np.flatnonzero((fixed != 0) & ~permanent):
                v = red[j] if fixed[j] < 0 else -red[j]
                if v < worst:
                    worst, drop = v, ("var", int(j))
        if drop is None:
            status = Status.OPTIMAL
            break
        if drop[0] == "row":
            work.pop(drop[1])
        else:
            fixed[drop[1]] = 0

    if status is Status.UNBOUNDED:
        return SolveResult(status, iterations=it)
    duals = np.zeros(b_eq.size + b_in.size)
    duals[: b_eq.size] = nu[: b_eq.size]
    for pos, row in enumerate(work):
        if b_eq.size + pos < nu.size:
            duals[b_eq.size + row] = max(nu[b_eq.size + pos], 0.0)
    grad = H @ x + qp.g
    red = grad + qp.A_eq.T @ duals[: b_eq.size] + qp.A_in.T @ duals[b_eq.size:]
    # bound multipliers absorb the residual on fixed columns
    kkt = red.copy()
    at_lo, at_hi = (fixed < 0) & ~permanent, fixed > 0
    kkt[at_lo] = np.minimum(red[at_lo], 0.0)
    kkt[at_hi] = np.maximum(red[at_hi], 0.0)
    kkt[permanent] = 0.0
    return SolveResult(status, qp.objective(x), x, duals=duals, reduced_costs=red,
                       bound=qp.objective(x), iterations=it,
                       info={"kkt_residual": float(np.abs(kkt).max(initial=0.0)),
                             "active_rows": list(work)})
