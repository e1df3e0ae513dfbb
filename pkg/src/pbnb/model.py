"""Two-stage stochastic MIQCQP data model.

Each scenario ``s`` holds the recourse data; first-stage data (cost, bounds,
integrality and the linear set X) is shared.  Bilinear terms only couple
second-stage variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .subsolve.model import EQ, GE, LE, SENSES

PROB_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype).reshape(-1)
    arr.setflags(write=False)
    return arr


def _terms(terms) -> tuple:
    return tuple((int(i), int(j), float(v)) for i, j, v in terms)


@dataclass(frozen=True)
class ScenarioConstraint:
    """T x + W y + sum U_ij y_i y_j  (sense)  rhs."""

    T_row: np.ndarray
    W_row: np.ndarray
    U_terms: tuple
    rhs: float
    sense: str = EQ

    def __post_init__(self):
        object.__setattr__(self, "T_row", _frozen(self.T_row))
        object.__setattr__(self, "W_row", _frozen(self.W_row))
        object.__setattr__(self, "U_terms", _terms(self.U_terms))
        object.__setattr__(self, "rhs", float(self.rhs))

    def activity(self, x, y) -> float:
        val = float(self.T_row @ x + self.W_row @ y)
        for i, j, v in self.U_terms:
            val += v * y[i] * y[j]
        return val

    def residual(self, x, y) -> float:
        """Amount by which the row is violated (0 when satisfied)."""
        r = self.activity(x, y) - self.rhs
        if self.sense == LE:
            return max(r, 0.0)
        if self.sense == GE:
            return max(-r, 0.0)
        return abs(r)


@dataclass(frozen=True)
class Scenario:
    q: np.ndarray
    Q_terms: tuple
    constraints: tuple
    y_lb: np.ndarray
    y_ub: np.ndarray
    y_integer: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen(self.q))
        object.__setattr__(self, "Q_terms", _terms(self.Q_terms))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "y_lb", _frozen(self.y_lb))
        object.__setattr__(self, "y_ub", _frozen(self.y_ub))
        yi = np.zeros(self.q.size, dtype=bool) if self.y_integer is None else self.y_integer
        object.__setattr__(self, "y_integer", _frozen(yi, bool))

    @property
    def n_y(self) -> int:
        return self.q.size

    def objective(self, y) -> float:
        val = float(self.q @ y)
        for i, j, v in self.Q_terms:
            val += v * y[i] * y[j]
        return val

    def bilinear_pairs(self) -> list[tuple[int, int]]:
        """Sorted distinct pairs (i, j), i <= j, used by Q or any U row.

        ``(i, j)`` and ``(j, i)`` name the same product, so they share one
        ``w`` variable; ``j`` is the discretised index.
        """
        pairs = {(min(i, j), max(i, j)) for i, j, _ in self.Q_terms}
        for con in self.constraints:
            pairs.update((min(i, j), max(i, j)) for i, j, _ in con.U_terms)
        return sorted(pairs)


@dataclass(frozen=True)
class StochasticProgram:
    c: np.ndarray
    x_lb: np.ndarray
    x_ub: np.ndarray
    x_integer: np.ndarray
    scenarios: tuple
    probabilities: np.ndarray
    X_A: Optional[np.ndarray] = None
    X_senses: tuple = ()
    X_rhs: Optional[np.ndarray] = None
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "c", _frozen(self.c))
        n = self.c.size
        object.__setattr__(self, "x_lb", _frozen(self.x_lb))
        object.__setattr__(self, "x_ub", _frozen(self.x_ub))
        object.__setattr__(self, "x_integer", _frozen(self.x_integer, bool))
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "probabilities", _frozen(self.probabilities))
        A = np.zeros((0, n)) if self.X_A is None else np.array(self.X_A, dtype=float).reshape(-1, n)
        A.setflags(write=False)
        object.__setattr__(self, "X_A", A)
        object.__setattr__(self, "X_senses", tuple(self.X_senses))
        object.__setattr__(self, "X_rhs", _frozen(np.zeros(0) if self.X_rhs is None else self.X_rhs))

    @property
    def n_x(self) -> int:
        return self.c.size

    @property
    def n_scenarios(self) -> int:
        return len(self.scenarios)

    def total_variables(self) -> int:
        """First-stage plus all second-stage variables (original space)."""
        return self.n_x + sum(sc.n_y for sc in self.scenarios)


@dataclass
class CandidateSolution:
    x_bar: np.ndarray
    x: list
    y: list
    objective: float = float("nan")


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "ok" if self.ok else "; ".join(self.errors)


class ProgramError(ValueError):
    """A program failed validation where a hard error is required."""


def _check_terms(terms, n, where, errors):
    for i, j, v in terms:
        if not (0 <= i < n and 0 <= j < n):
            errors.append(f"{where}: term ({i}, {j}) out of range for {n} variables")
        if not np.isfinite(v):
            errors.append(f"{where}: non-finite coefficient on ({i}, {j})")


def validate(program: StochasticProgram) -> ValidationReport:
    """Collect every structural problem instead of stopping at the first."""
    errs: list[str] = []
    n = program.n_x
    p = program.probabilities
    if p.size != program.n_scenarios:
        errs.append(f"{p.size} probabilities for {program.n_scenarios} scenarios")
    if program.n_scenarios == 0:
        errs.append("program has no scenarios")
    if np.any(p <= 0):
        errs.append("probabilities must be strictly positive")
    if p.size and abs(float(p.sum()) - 1.0) > PROB_TOL:
        errs.append(f"probabilities sum to {float(p.sum()):.12g}")
    for name, arr in (("x_lb", program.x_lb), ("x_ub", program.x_ub),
                      ("x_integer", program.x_integer)):
        if arr.size != n:
            errs.append(f"{name} has length {arr.size}, expected {n}")
    if program.x_lb.size == n and program.x_ub.size == n:
        if np.any(program.x_lb > program.x_ub):
            errs.append("first-stage lower bound above upper bound")
        if program.x_integer.size == n:
            unb = program.x_integer & ~(np.isfinite(program.x_lb) & np.isfinite(program.x_ub))
            for k in np.flatnonzero(unb):
                errs.append(f"integer first-stage variable x[{k}] needs finite bounds")
    if not np.all(np.isfinite(program.c)):
        errs.append("first-stage cost has non-finite entries")
    if len(program.X_senses) != program.X_A.shape[0] or program.X_rhs.size != program.X_A.shape[0]:
        errs.append("first-stage constraint block has inconsistent row counts")
    if any(s not in SENSES for s in program.X_senses):
        errs.append("unknown sense in first-stage constraints")

    for s, sc in enumerate(program.scenarios):
        where = f"scenario {s}"
        ny = sc.n_y
        for name, arr in (("y_lb", sc.y_lb), ("y_ub", sc.y_ub), ("y_integer", sc.y_integer)):
            if arr.size != ny:
                errs.append(f"{where}: {name} has length {arr.size}, expected {ny}")
        if not np.all(np.isfinite(sc.q)):
            errs.append(f"{where}: q has non-finite entries")
        _check_terms(sc.Q_terms, ny, f"{where} Q", errs)
        for m, con in enumerate(sc.constraints):
            cw = f"{where} row {m}"
            if con.T_row.size != n:
                errs.append(f"{cw}: T row has length {con.T_row.size}, expected {n}")
            if con.W_row.size != ny:
                errs.append(f"{cw}: W row has length {con.W_row.size}, expected {ny}")
            if con.sense not in SENSES:
                errs.append(f"{cw}: unknown sense {con.sense!r}")
            if not (np.all(np.isfinite(con.T_row)) and np.all(np.isfinite(con.W_row))
                    and np.isfinite(con.rhs)):
                errs.append(f"{cw}: non-finite entries")
            _check_terms(con.U_terms, ny, f"{cw} U", errs)
        if sc.y_lb.size == ny and sc.y_ub.size == ny:
            if np.any(sc.y_lb > sc.y_ub):
                errs.append(f"{where}: lower bound above upper bound")
            try:
                pairs = sc.bilinear_pairs()
            except Exception:  # bad indices already reported
                pairs = []
            used = sorted({k for pr in pairs for k in pr if 0 <= k < ny})
            for k in used:
                if not (np.isfinite(sc.y_lb[k]) and np.isfinite(sc.y_ub[k])):
                    errs.append(f"{where}: bilinear variable y[{k}] needs finite bounds")
                if sc.y_integer.size == ny and sc.y_integer[k]:
                    errs.append(f"{where}: integer y[{k}] in a bilinear term is unsupported")
    return ValidationReport(errs)


def require_valid(program: StochasticProgram) -> None:
    rep = validate(program)
    if not rep.ok:
        raise ProgramError(str(rep))


@dataclass
class PrimalEvaluation:
    objective: float
    max_violation: float
    nac_violation: float
    feasible: bool


def evaluate_primal(program: StochasticProgram, sol: CandidateSolution,
                    tol: float = 1e-6) -> PrimalEvaluation:
    """Objective, worst residual (rows, bounds, X, integrality) and NAC spread.

    ``feasible`` is ``max(max_violation, nac_violation) <= tol``.
    """
    n = program.n_x
    S = program.n_scenarios
    x_bar = np.asarray(sol.x_bar, dtype=float)
    if x_bar.size != n or len(sol.x) != S or len(sol.y) != S:
        raise ValueError("candidate solution dimensions do not match the program")
    obj = 0.0
    worst = 0.0
    nac = 0.0
    for s, sc in enumerate(program.scenarios):
        x = np.asarray(sol.x[s], dtype=float)
        y = np.asarray(sol.y[s], dtype=float)
        if x.size != n or y.size != sc.n_y:
            raise ValueError(f"scenario {s}: vector length mismatch")
        obj += program.probabilities[s] * (float(program.c @ x) + sc.objective(y))
        for con in sc.constraints:
            worst = max(worst, con.residual(x, y))
        worst = max(worst, float(np.max(program.x_lb - x, initial=0.0)),
                    float(np.max(x - program.x_ub, initial=0.0)),
                    float(np.max(sc.y_lb - y, initial=0.0)),
                    float(np.max(y - sc.y_ub, initial=0.0)))
        if program.x_integer.any():
            xi = x[program.x_integer]
            worst = max(worst, float(np.abs(xi - np.round(xi)).max()))
        if sc.y_integer.any():
            yi = y[sc.y_integer]
            worst = max(worst, float(np.abs(yi - np.round(yi)).max()))
        if program.X_A.shape[0]:
            act = program.X_A @ x - program.X_rhs
            for k, sense in enumerate(program.X_senses):
                r = act[k]
                worst = max(worst, max(r, 0.0) if sense == LE else
                            max(-r, 0.0) if sense == GE else abs(r))
        nac = max(nac, float(np.max(np.abs(x - x_bar), initial=0.0)))
    return PrimalEvaluation(obj, worst, nac, max(worst, nac) <= tol)


def permuted(program: StochasticProgram, order: Sequence[int]) -> StochasticProgram:
    """Same program with scenarios (and probabilities) reordered."""
    order = list(order)
    return StochasticProgram(program.c, program.x_lb, program.x_ub, program.x_integer,
                             [program.scenarios[k] for k in order],
                             program.probabilities[order], program.X_A, program.X_senses,
                             program.X_rhs, program.name, dict(program.meta))
