"""Frank-Wolfe progressive hedging with a simplicial-decomposition inner loop.

The dual is attacked through its primal form: minimise the expected cost
over conv(block s) for every scenario subject to x^s = x_bar.  Each scenario
keeps a vertex set V^s of block solutions; its convex hull inner-approximates
conv(block s).  One outer iteration per scenario:

  1. linearise the augmented Lagrangian at the current point; the block MILP
     at that gradient yields a new vertex and, at the first inner step, a
     Lagrangian value L^s at the shifted multiplier
         mu_hat^s = mu^s + tau (x^s - x_bar),
  2. minimise the augmented Lagrangian over conv(V^s) (a small QP in the
     convex weights),

then x_bar and the multipliers are updated progressive-hedging style.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .lagrangian import DualEvaluator, ScenarioSolution, dual_residual
from .subsolve.qp import QuadraticModel, solve_qp
from .trace import NullTrace

DEDUP_TOL = 1e-12


@dataclass
class FwphParams:
    tau: float = 2.0
    alpha: float = 1.0
    eps: float = 1e-3
    k_max: int = 1000
    t_max: int = 1
    gamma: float = 1e-6

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")
        if self.t_max < 1 or self.k_max < 1:
            raise ValueError("t_max and k_max must be positive")


def augmented_lagrangian(cost_xyw, x, y, w, x_bar, mu_s, tau) -> float:
    """c'x + q'y + sum Q w + mu'(x - x_bar) + (tau/2)||x - x_bar||^2.

    ``cost_xyw`` is the triple (c, q, Qw) of linear cost vectors.
    """
    c, q, qw = cost_xyw
    d = np.asarray(x, dtype=float) - x_bar
    return float(c @ x + q @ y + qw @ w + mu_s @ d + 0.5 * tau * d @ d)


class VertexSet:
    """Distinct block solutions of one scenario (compared on their x, y, w)."""

    def __init__(self, sub):
        self.sub = sub
        self.full: list[np.ndarray] = []
        self.points: list[np.ndarray] = []   # concatenated (x, y, w)

    def _key(self, v):
        s = self.sub
        return np.concatenate([s.x_part(v), s.y_part(v), s.w_part(v)])

    def add(self, v) -> bool:
        key = self._key(v)
        for pt in self.points:
            if np.all(np.abs(pt - key) <= DEDUP_TOL):
                return False
        self.full.append(np.array(v, dtype=float))
        self.points.append(key)
        return True

    def __len__(self):
        return len(self.points)

    def matrix(self) -> np.ndarray:
        return np.array(self.points).T   # columns are vertices


@dataclass
class SdmResult:
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    lagrangian: float              # L^s at mu_hat from t = 1
    mu_hat: np.ndarray
    minimiser: ScenarioSolution    # block MILP solution at t = 1
    al_values: list                # AL at the start point (if inside conv V) and after each t
    gaps: list
    steps: int
    weights: np.ndarray = None


class ScenarioSdm:
    """Simplicial decomposition for one scenario's augmented Lagrangian."""

    def __init__(self, oracle, c, tau: float):
        self.oracle = oracle
        sub = oracle.sub
        lay = sub.layout
        self.n_x, self.n_y, self.n_w = lay.n_x, lay.n_y, len(lay.pairs)
        base = sub.base_cost
        self.c = np.asarray(c, dtype=float)
        self.q = base[lay.slices["y"]]
        self.qw = base[lay.slices["w"]]
        self.tau = tau
        self.V = VertexSet(sub)

    def split(self, pt):
        a, b = self.n_x, self.n_x + self.n_y
        return pt[:a], pt[a:b], pt[b:]

    def al(self, pt, x_bar, mu_s):
        x, y, w = self.split(pt)
        return augmented_lagrangian((self.c, self.q, self.qw), x, y, w, x_bar, mu_s, self.tau)

    def weight_qp(self, x_bar, mu_s, lam0=None):
        P = self.V.matrix()
        X = P[: self.n_x]
        lin = np.concatenate([self.c, self.q, self.qw]) @ P
        m = P.shape[1]
        H = self.tau * X.T @ X
        g = lin + (mu_s - self.tau * x_bar) @ X
        const = -float(mu_s @ x_bar) + 0.5 * self.tau * float(x_bar @ x_bar)
        qp = QuadraticModel(H, g, np.ones((1, m)), [1.0], lb=np.zeros(m), offset=const)
        x0 = None
        if lam0 is not None and lam0.size <= m:
            x0 = np.concatenate([lam0, np.zeros(m - lam0.size)])
        res = solve_qp(qp, x0=x0)
        if not res.ok:
            raise RuntimeError(f"weight QP ended with {res.status.value}")
        lam = np.maximum(res.x, 0.0)
        lam /= lam.sum()
        return P @ lam, lam, res.objective

    def run(self, start, x_bar, mu_s, t_max, gamma, x_lb, x_ub, lam=None,
            start_in_hull=False) -> SdmResult:
        pt = np.array(start, dtype=float)
        al_values = [self.al(pt, x_bar, mu_s)] if start_in_hull else []
        gaps = []
        first = None
        mu_hat_1 = None
        t = 0
        for t in range(1, t_max + 1):
            x_prev, y_prev, w_prev = self.split(pt)
            mu_hat = mu_s + self.tau * (x_prev - x_bar)
            sol = self.oracle.lagrangian(mu_hat, x_lb, x_ub)
            if t == 1:
                first, mu_hat_1 = sol, mu_hat
            gap = -float((self.c + mu_hat) @ (sol.x - x_prev) + self.q @ (sol.y - y_prev)
                         + self.qw @ (sol.w - w_prev))
            gaps.append(gap)
            self.V.add(sol.vector)
            pt, lam, val = self.weight_qp(x_bar, mu_s, lam)
            al_values.append(val)
            if gap <= gamma:
                break
        x, y, w = self.split(pt)
        return SdmResult(x, y, w, first.value, mu_hat_1, first, al_values, gaps, t, lam)


@dataclass
class FwphResult:
    mu: np.ndarray                 # multiplier at which the best bound was attained
    value: float                   # best Lagrangian bound seen
    scenario_values: np.ndarray
    evaluation: object             # minimisers behind the best bound (x rows)
    x_bar: np.ndarray
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)
    history: list = field(default_factory=list, repr=False)
    notes: list = field(default_factory=list)


@dataclass
class _BoundEval:
    mu: np.ndarray
    value: float
    scenario_values: np.ndarray
    solutions: list

    @property
    def x(self):
        return np.array([s.x for s in self.solutions])


def initialize_vertex_sets(evaluator: DualEvaluator, mu0, x_lb=None, x_ub=None, tau: float = 2.0):
    """Vertex sets seeded from scenario 0's first-stage choice.

    Returns (sdms, initial evaluation at mu0, warnings list).  Scenario 0
    gets its own minimiser; every other scenario also gets the recourse
    solution at scenario 0's x.
    """
    ev0 = evaluator.evaluate(mu0, x_lb, x_ub)
    sdms = [ScenarioSdm(o, evaluator.program.c, tau) for o in evaluator.oracles]
    notes = []
    x_ref = ev0.solutions[0].x

    def seed(s):
        sdms[s].V.add(ev0.solutions[s].vector)
        if s == 0:
            return None
        fixed = evaluator.oracles[s].recourse(x_ref)
        if fixed is None:
            return f"scenario {s}: recourse infeasible at scenario 0's first stage; one seed vertex"
        sdms[s].V.add(fixed.vector)
        return None

    for msg in evaluator.map(seed):
        if msg:
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return sdms, ev0, notes


def run_fwph(evaluator: DualEvaluator, mu0=None, x_lb=None, x_ub=None,
             params: FwphParams | None = None, trace=None) -> FwphResult:
    """FWPH on a node.  Raises ``NodeInfeasible`` when the node is empty.

    The reported value is the largest Lagrangian value seen (including the
    one at ``mu0``); ``evaluation`` carries the block MILP minimisers at the
    multiplier where it was attained.
    """
    params = params or FwphParams()
    trace = trace or NullTrace()
    p = evaluator.probabilities
    S, n = evaluator.n_scenarios, evaluator.program.n_x
    mu = np.zeros((S, n)) if mu0 is None else np.array(mu0, dtype=float)
    sdms, ev0, notes = initialize_vertex_sets(evaluator, mu, x_lb, x_ub, params.tau)
    best = _BoundEval(mu.copy(), ev0.value, ev0.scenario_values, ev0.solutions)
    trace.emit("fwph", k=0, value=ev0.value, best=ev0.value,
               dual_residual=dual_residual(mu, p), mu=mu, vertices=[len(d.V) for d in sdms])

    xs = ev0.x
    ys = [s.y for s in ev0.solutions]
    ws = [s.w for s in ev0.solutions]
    lams = [None] * S
    x_bar = p @ xs
    mu = mu + params.tau * (xs - x_bar)
    residuals, history = [], []
    converged = False
    k = 0
    for k in range(1, params.k_max + 1):
        x_prev_bar = x_bar

        def step(s, mu=mu, x_prev_bar=x_prev_bar):
            x_start = (1 - params.alpha) * x_prev_bar + params.alpha * xs[s]
            start = np.concatenate([x_start, ys[s], ws[s]])
            return sdms[s].run(start, x_prev_bar, mu[s], params.t_max, params.gamma,
                               x_lb, x_ub, lams[s], start_in_hull=params.alpha == 1.0)

        results = evaluator.map(step)
        vals = np.array([r.lagrangian for r in results])
        L_k = float(p @ vals)
        mu_hat = np.array([r.mu_hat for r in results])
        xs = np.array([r.x for r in results])
        ys = [r.y for r in results]
        ws = [r.w for r in results]
        lams = [r.weights for r in results]
        x_bar = p @ xs
        resid = float(np.sqrt(p @ np.sum((xs - x_prev_bar) ** 2, axis=1)))
        residuals.append(resid)
        if L_k > best.value:
            best = _BoundEval(mu_hat, L_k, vals, [r.minimiser for r in results])
        history.append({"k": k, "L": L_k, "residual": resid, "mu": mu.copy(),
                        "mu_hat": mu_hat, "al_values": [r.al_values for r in results],
                        "gaps": [r.gaps for r in results]})
        trace.emit("fwph", k=k, value=L_k, best=best.value, residual=resid,
                   dual_residual=max(dual_residual(mu, p), dual_residual(mu_hat, p)),
                   mu=mu, mu_hat=mu_hat, vertices=[len(d.V) for d in sdms])
        if resid <= params.eps:
            converged = True
            break
        mu = mu + params.tau * (xs - x_bar)
    return FwphResult(best.mu, best.value, best.scenario_values, best, x_bar, k, converged,
                      residuals, history, notes)
