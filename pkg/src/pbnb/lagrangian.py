"""Scenario-decomposed Lagrangian dual of the relaxed program.

Relaxing x^s = x_bar with multipliers mu^s (scaled by 1/p^s) leaves

    L(mu) = sum_s p^s L^s(mu^s),
    L^s(mu^s) = min { (c + mu^s)'x + q^s'y + sum Q^s w : block s feasible },

which is finite only when sum_s p^s mu^s = 0.  Each L^s is concave and
piecewise linear in mu^s with supergradient x^s(mu^s), the x-part of the
minimiser.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import StochasticProgram
from .parallel import parallel_map
from .rnmdt import RnmdtSubproblem, build_scenario_subproblem
from .subsolve.backend import SolverBackend, get_backend
from .subsolve.model import SolverError, Status


class NodeInfeasible(Exception):
    """Some scenario block is empty under the node's first-stage bounds."""

    def __init__(self, scenario: int):
        super().__init__(f"scenario {scenario} infeasible under node bounds")
        self.scenario = scenario


def dual_residual(mu, probabilities) -> float:
    """||sum_s p^s mu^s||_inf."""
    mu = np.asarray(mu, dtype=float)
    return float(np.abs(np.asarray(probabilities) @ mu).max(initial=0.0))


def project_dual_feasible(mu_raw, probabilities) -> np.ndarray:
    """Euclidean projection onto {mu : sum_s p^s mu^s = 0}."""
    mu = np.array(mu_raw, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    shift = (p @ mu) / float(p @ p)
    return mu - np.outer(p, shift)


@dataclass
class ScenarioSolution:
    value: float
    vector: np.ndarray
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray


@dataclass
class DualEvaluation:
    mu: np.ndarray
    value: float
    scenario_values: np.ndarray
    solutions: list = field(repr=False)

    @property
    def x(self) -> np.ndarray:
        """Supergradients: row s is x^s(mu^s)."""
        return np.array([sol.x for sol in self.solutions])


class ScenarioOracle:
    """Re-solvable scenario block; keeps the solver session (and its basis)."""

    def __init__(self, sub: RnmdtSubproblem, backend: SolverBackend, gap_tol: float = 1e-9,
                 node_limit: int = 1_000_000):
        self.sub = sub
        self.session = backend.session(sub.model)
        self.gap_tol = gap_tol
        self.node_limit = node_limit

    def solve(self, cost, x_lb=None, x_ub=None, raise_infeasible=True):
        lb, ub = self.sub.bounds(x_lb, x_ub)
        if np.any(lb > ub + 1e-12):
            if raise_infeasible:
                raise NodeInfeasible(self.sub.scenario)
            return None
        res = self.session.solve(cost, lb, ub, self.gap_tol, self.node_limit)
        if res.status is Status.INFEASIBLE:
            if raise_infeasible:
                raise NodeInfeasible(self.sub.scenario)
            return None
        if res.status is not Status.OPTIMAL:
            raise SolverError(f"scenario {self.sub.scenario}: subproblem ended with {res.status.value}")
        v = res.x
        return ScenarioSolution(float(cost @ v), v, self.sub.x_part(v).copy(),
                                self.sub.y_part(v).copy(), self.sub.w_part(v).copy())

    def lagrangian(self, mu_s, x_lb=None, x_ub=None) -> ScenarioSolution:
        return self.solve(self.sub.cost(mu_s), x_lb, x_ub)

    def recourse(self, x, raise_infeasible=False):
        """Best (y, w) with x fixed, objective q'y + sum Q w + c'x."""
        x = np.asarray(x, dtype=float)
        return self.solve(self.sub.cost(), x, x, raise_infeasible)


class DualEvaluator:
    """Builds the scenario blocks once and evaluates L at any multiplier."""

    def __init__(self, program: StochasticProgram, p: int, backend: SolverBackend | None = None,
                 workers: int = 1, gap_tol: float = 1e-9):
        self.program = program
        self.p = p
        self.backend = backend or get_backend()
        self.workers = workers
        subs = parallel_map(lambda s: build_scenario_subproblem(program, s, p),
                            range(program.n_scenarios), workers)
        self.oracles = [ScenarioOracle(sub, self.backend, gap_tol) for sub in subs]
        self.probabilities = program.probabilities
        self.n_evaluations = 0

    @property
    def n_scenarios(self) -> int:
        return len(self.oracles)

    def map(self, fn):
        return parallel_map(fn, range(self.n_scenarios), self.workers)

    def evaluate(self, mu, x_lb=None, x_ub=None) -> DualEvaluation:
        """L(mu) under first-stage bounds; raises ``NodeInfeasible``."""
        mu = np.asarray(mu, dtype=float)
        sols = self.map(lambda s: self.oracles[s].lagrangian(mu[s], x_lb, x_ub))
        vals = np.array([sol.value for sol in sols])
        self.n_evaluations += 1
        return DualEvaluation(mu.copy(), float(self.probabilities @ vals), vals, sols)

    def recourse(self, x):
        """Per-scenario recourse at fixed x, or ``None`` if some block is infeasible.

        Returns (objective of the relaxed program at x, solutions).
        """
        sols = self.map(lambda s: self.oracles[s].recourse(x))
        if any(sol is None for sol in sols):
            return None, sols
        return float(self.probabilities @ np.array([sol.value for sol in sols])), sols


def evaluate_dual(program: StochasticProgram, p: int, mu, x_lb=None, x_ub=None,
                  backend: SolverBackend | None = None, workers: int = 1) -> DualEvaluation:
    """One-shot evaluation of L(mu); builds the scenario blocks each call."""
    return DualEvaluator(program, p, backend, workers).evaluate(mu, x_lb, x_ub)
