"""Proximal bundle method for the scenario dual.

Each scenario keeps its own cutting-plane model

    theta^s <= p^s L^s(mu_l) + p^s x^s_l'(mu^s - mu^s_l)

so that sum_s theta^s over-estimates L(mu) = sum_s p^s L^s(mu^s).  The master
maximises sum theta - (u/2)||mu - center||^2 subject to the cuts and
sum_s p^s mu^s = 0.  The center moves on serious steps; the proximal weight
u and the step counter follow the serious/null update rules with the
too-large / too-small tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lagrangian import DualEvaluator, dual_residual, project_dual_feasible
from .subsolve.qp import QuadraticModel, solve_qp
from .trace import NullTrace


class BundleError(RuntimeError):
    """Cutting-plane model under-estimates the function (invalid cut)."""


@dataclass
class BundleParams:
    u_min: float = 1e-3
    u_init: float = 1.0
    m_L: float = 0.3
    m_R: float = 0.7
    i_max: int = 3
    i_min: int = -3
    C_min: float = 0.1
    C_avg: float = 0.5
    C_max: float = 10.0
    C_v: float = 10.0
    eps: float = 1e-3
    k_max: int = 1000

    def __post_init__(self):
        if not (0 < self.m_L < self.m_R < 1):
            raise ValueError("need 0 < m_L < m_R < 1")
        if not (self.i_min < 0 < self.i_max):
            raise ValueError("need i_min < 0 < i_max")
        if not (self.u_init > self.u_min > 0):
            raise ValueError("need u_init > u_min > 0")


@dataclass
class Cut:
    mu: np.ndarray          # (S, n) point where the cut was taken
    values: np.ndarray      # (S,) L^s at that point
    grads: np.ndarray       # (S, n) x^s at that point


@dataclass
class MasterSolution:
    mu: np.ndarray
    model_value: float      # m_k(mu)
    g: np.ndarray           # element of the model's superdifferential at mu
    active: list


@dataclass
class StepOutcome:
    serious: bool
    u_next: float
    i_next: int
    v: float
    h: float
    delta_bar: float
    delta_center: float
    g_norm: float
    too_small: bool = False


class CutModel:
    def __init__(self, probabilities, n_x: int):
        self.p = np.asarray(probabilities, dtype=float)
        self.n_x = n_x
        self.cuts: list[Cut] = []

    def add(self, mu, values, grads):
        self.cuts.append(Cut(np.array(mu, dtype=float), np.array(values, dtype=float),
                             np.array(grads, dtype=float)))

    def scenario_values(self, mu) -> np.ndarray:
        """min over cuts of each scenario's linear model at ``mu``."""
        mu = np.asarray(mu, dtype=float)
        out = np.full(self.p.size, np.inf)
        for cut in self.cuts:
            lin = self.p * (cut.values + np.einsum("sn,sn->s", cut.grads, mu - cut.mu))
            out = np.minimum(out, lin)
        return out

    def value(self, mu) -> float:
        return float(self.scenario_values(mu).sum())

    def solve_master(self, center, u: float) -> MasterSolution:
        S, n = self.p.size, self.n_x
        nm = S * n
        nv = nm + S
        H = np.zeros((nv, nv))
        H[:nm, :nm] = u * np.eye(nm)
        g = np.zeros(nv)
        g[:nm] = -u * center.reshape(-1)
        g[nm:] = -1.0
        rows, rhs = [], []
        for cut in self.cuts:
            for s in range(S):
                r = np.zeros(nv)
                r[nm + s] = 1.0
                r[s * n:(s + 1) * n] = -self.p[s] * cut.grads[s]
                rows.append(r)
                rhs.append(self.p[s] * (cut.values[s] - cut.grads[s] @ cut.mu[s]))
        A_eq = np.zeros((n, nv))
        for s in range(S):
            A_eq[:, s * n:(s + 1) * n] = self.p[s] * np.eye(n)
        qp = QuadraticModel(H, g, A_eq, np.zeros(n), np.array(rows), np.array(rhs),
                            offset=0.5 * u * float(center.reshape(-1) @ center.reshape(-1)))
        start = np.concatenate([center.reshape(-1), self.scenario_values(center)])
        res = solve_qp(qp, x0=start)
        if not res.ok:
            raise BundleError(f"master problem ended with {res.status.value}")
        mu = project_dual_feasible(res.x[:nm].reshape(S, n), self.p)
        lam = res.duals[n:]
        gk = np.zeros((S, n))
        active = []
        for c_idx, cut in enumerate(self.cuts):
            for s in range(S):
                w = lam[c_idx * S + s]
                if w > 1e-12:
                    active.append((c_idx, s))
                    gk[s] += w * self.p[s] * cut.grads[s]
        return MasterSolution(mu, self.value(mu), gk, active)


def decide_step(L_new: float, L_center: float, model_value: float, u: float, i_u: int,
                params: BundleParams, delta_bar: float, delta_center: float,
                g_norm: float) -> StepOutcome:
    """Serious/null decision plus the proximal weight and counter update."""
    v = model_value - L_center
    gain = L_new - L_center
    h = u if abs(v) <= 1e-12 else 2.0 * u * (1.0 - gain / v)
    if gain >= params.m_L * v:
        u_next = u
        if gain >= params.m_R * v and i_u > 0:
            u_next = max(h, params.C_min * u, params.u_min)
        elif i_u > params.i_max:
            u_next = max(params.C_avg * u, params.u_min)
        i_next = max(i_u + 1, 1) if u_next == u else 1
        return StepOutcome(True, u_next, i_next, v, h, delta_bar, delta_center, g_norm)
    too_small = delta_bar > max(delta_center + g_norm, params.C_v * v)
    if too_small and i_u < params.i_min:
        u_next = min(h, params.C_max * u)
    else:
        u_next = params.C_max * u
    i_next = min(i_u - 1, -1) if u_next == u else -1
    return StepOutcome(False, u_next, i_next, v, h, delta_bar, delta_center, g_norm, too_small)


@dataclass
class BundleResult:
    mu: np.ndarray
    value: float
    scenario_values: np.ndarray
    evaluation: object
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


Oracle = Callable[[np.ndarray], "object"]


def proximal_bundle(oracle: Oracle, probabilities, mu0, params: BundleParams | None = None,
                    trace=None) -> BundleResult:
    """Maximise a scenario-separable concave function.

    ``oracle(mu)`` returns an object with ``value``, ``scenario_values`` and
    ``x`` (row s = supergradient of L^s at mu^s).
    """
    params = params or BundleParams()
    trace = trace or NullTrace()
    p = np.asarray(probabilities, dtype=float)
    mu0 = project_dual_feasible(mu0, p)
    ev = oracle(mu0)
    model = CutModel(p, mu0.shape[1])
    model.add(mu0, ev.scenario_values, ev.x)
    center, center_ev = mu0, ev
    u, i_u = params.u_init, 0
    history = []
    trace.emit("bundle", k=0, value=ev.value, center_value=ev.value,
               dual_residual=dual_residual(mu0, p), mu=mu0)
    k = 0
    converged = False
    while True:
        k += 1
        master = model.solve_master(center, u)
        mu_k = master.mu
        ev_k = oracle(mu_k)
        L_center = center_ev.value
        G = p[:, None] * ev_k.x
        delta_bar = ev_k.value - float(np.sum(G * (mu_k - center))) - L_center
        delta_center = master.model_value + float(np.sum(master.g * (center - mu_k))) - L_center
        g_norm = float(np.linalg.norm(master.g))
        v = master.model_value - L_center
        if v < -1e-6 * max(1.0, abs(L_center)):
            raise BundleError(f"predicted increase {v:.3e} < 0: cut model is not an over-estimate")
        out = decide_step(ev_k.value, L_center, master.model_value, u, i_u, params,
                          delta_bar, delta_center, g_norm)
        history.append({"k": k, "u": u, "i_u": i_u, "serious": out.serious, "u_next": out.u_next,
                        "i_next": out.i_next, "v": out.v, "h": out.h, "L": ev_k.value,
                        "L_center": L_center, "model": master.model_value, "mu": mu_k.copy()})
        trace.emit("bundle", k=k, value=ev_k.value, model_value=master.model_value, v=out.v,
                   u=u, i_u=i_u, step="serious" if out.serious else "null",
                   center_value=max(L_center, ev_k.value) if out.serious else L_center,
                   dual_residual=dual_residual(mu_k, p), mu=mu_k)
        if out.serious:
            center, center_ev = mu_k, ev_k
        u, i_u = out.u_next, out.i_next
        model.add(mu_k, ev_k.scenario_values, ev_k.x)
        if out.v <= params.eps:
            converged = True
            break
        if k > params.k_max:
            break
    return BundleResult(center, center_ev.value, center_ev.scenario_values, center_ev, k,
                        converged, history)


def run_bundle(evaluator: DualEvaluator, mu0=None, x_lb=None, x_ub=None,
               params: BundleParams | None = None, trace=None) -> BundleResult:
    """Bundle method on a node (first-stage bounds ``x_lb``/``x_ub``).

    Raises ``NodeInfeasible`` when the node is empty.  The returned value is
    L at the final center, a valid lower bound for the node.
    """
    S, n = evaluator.n_scenarios, evaluator.program.n_x
    mu0 = np.zeros((S, n)) if mu0 is None else np.asarray(mu0, dtype=float)
    return proximal_bundle(lambda mu: evaluator.evaluate(mu, x_lb, x_ub),
                           evaluator.probabilities, mu0, params, trace)
