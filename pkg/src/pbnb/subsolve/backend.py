"""Solver backends.

``BuiltIn`` runs the kernels in this package.  ``External`` writes the model
to a JSON exchange file, runs a user command and reads a JSON result back, so
an industrial solver can stand in for the monolith baseline without being
linked.  ``PBNB_BACKEND`` (builtin | external) picks the default and
``PBNB_EXTERNAL_CMD`` holds the command; it is called as
``<cmd> <model.json> <result.json>``.

Model document::

    {"format": "pbnb-linear-model", "version": 1, "sense": "min"|"max",
     "c": [...], "offset": float,
     "rows": [[row, col, value], ...], "row_senses": ["<=", ...], "rhs": [...],
     "lb": [...], "ub": [...],          # null for an infinite bound
     "integer": [bool, ...], "gap_tol": float, "node_limit": int,
     "want_duals": bool}

Result document::

    {"status": "optimal"|"infeasible"|"unbounded"|"iteration-limit",
     "objective": float|null, "x": [...]|null, "duals": [...]|null,
     "bound": float|null}
"""

from __future__ import annotations

import json
import math
import os
import shlex
import subprocess
import tempfile
from abc import ABC, abstractmethod

import numpy as np

from .lp import LPKernel
from .milp import solve_milp as _builtin_milp
from .model import LinearModel, SolveResult, SolverError, Status
from .qp import QuadraticModel, solve_qp as _builtin_qp

MODEL_FORMAT = "pbnb-linear-model"


def _finite_or_none(v):
    return float(v) if math.isfinite(v) else None


def model_to_doc(model: LinearModel, gap_tol=1e-9, node_limit=100_000, want_duals=False) -> dict:
    coo = model.A.tocoo()
    return {
        "format": MODEL_FORMAT, "version": 1,
        "sense": "max" if model.maximize else "min",
        "c": [float(v) for v in model.c], "offset": float(model.offset),
        "rows": [[int(r), int(c), float(v)] for r, c, v in zip(coo.row, coo.col, coo.data)],
        "row_senses": list(model.senses), "rhs": [float(v) for v in model.rhs],
        "lb": [_finite_or_none(v) for v in model.lb],
        "ub": [_finite_or_none(v) for v in model.ub],
        "integer": [bool(v) for v in model.integer],
        "gap_tol": float(gap_tol), "node_limit": int(node_limit), "want_duals": bool(want_duals),
    }


def model_from_doc(doc: dict) -> LinearModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a pbnb linear model document")
    n = len(doc["c"])
    m = len(doc["row_senses"])
    A = np.zeros((m, n))
    for r, c, v in doc["rows"]:
        A[r, c] += v
    lb = [-np.inf if v is None else v for v in doc["lb"]]
    ub = [np.inf if v is None else v for v in doc["ub"]]
    return LinearModel(doc["c"], A, doc["row_senses"], doc["rhs"], lb, ub, doc["integer"],
                       maximize=doc["sense"] == "max", offset=doc.get("offset", 0.0))


def result_from_doc(doc: dict) -> SolveResult:
    st = Status(doc["status"])
    x = None if doc.get("x") is None else np.asarray(doc["x"], dtype=float)
    duals = None if doc.get("duals") is None else np.asarray(doc["duals"], dtype=float)
    obj = doc.get("objective")
    bound = doc.get("bound")
    return SolveResult(st, float("nan") if obj is None else float(obj), x, duals=duals,
                       bound=float("nan") if bound is None else float(bound))


class SolverBackend(ABC):
    name = "abstract"

    @abstractmethod
    def solve_lp(self, model: LinearModel) -> SolveResult: ...

    @abstractmethod
    def solve_milp(self, model: LinearModel, gap_tol: float = 1e-9,
                   node_limit: int = 100_000) -> SolveResult: ...

    def solve_qp(self, qp: QuadraticModel, x0=None) -> SolveResult:
        return _builtin_qp(qp, x0)

    def session(self, model: LinearModel) -> "MilpSession":
        """Re-solve handle for one constraint system under changing objective/bounds."""
        return MilpSession(self, model)


class MilpSession:
    """Generic session: rebuilds the model per call."""

    def __init__(self, backend: SolverBackend, model: LinearModel):
        self.backend = backend
        self.model = model

    def solve(self, c=None, lb=None, ub=None, gap_tol=1e-9, node_limit=100_000) -> SolveResult:
        m = self.model
        if c is not None:
            m = m.with_objective(c, m.offset)
        if lb is not None or ub is not None:
            m = m.with_bounds(m.lb if lb is None else lb, m.ub if ub is None else ub)
        return self.backend.solve_milp(m, gap_tol, node_limit)


class _BuiltInSession(MilpSession):
    """Keeps the dense simplex matrix and the last root basis between solves."""

    def __init__(self, backend, model):
        super().__init__(backend, model)
        self.kernel = LPKernel(model)
        self.basis = None

    def solve(self, c=None, lb=None, ub=None, gap_tol=1e-9, node_limit=100_000) -> SolveResult:
        res = _builtin_milp(self.model, gap_tol, node_limit, kernel=self.kernel,
                            c=c, lb=lb, ub=ub, basis=self.basis)
        if res.basis is not None:
            self.basis = res.basis
        return res


class BuiltIn(SolverBackend):
    name = "builtin"

    def solve_lp(self, model):
        return LPKernel(model).solve()

    def solve_milp(self, model, gap_tol=1e-9, node_limit=100_000):
        return _builtin_milp(model, gap_tol, node_limit)

    def session(self, model):
        return _BuiltInSession(self, model)


class External(SolverBackend):
    """Runs ``command model.json result.json``; the QP stays on the built-in kernel."""

    name = "external"

    def __init__(self, command: str, timeout: float | None = None):
        if not command:
            raise SolverError("external backend needs a command (PBNB_EXTERNAL_CMD)")
        self.command = shlex.split(command)
        self.timeout = timeout

    def _run(self, doc: dict) -> SolveResult:
        with tempfile.TemporaryDirectory(prefix="pbnb-") as tmp:
            src = os.path.join(tmp, "model.json")
            dst = os.path.join(tmp, "result.json")
            with open(src, "w") as fh:
                json.dump(doc, fh)
            proc = subprocess.run(self.command + [src, dst], capture_output=True, text=True,
                                  timeout=self.timeout)
            if proc.returncode != 0 or not os.path.exists(dst):
                raise SolverError(f"external solver failed ({proc.returncode}): {proc.stderr.strip()}")
            with open(dst) as fh:
                return result_from_doc(json.load(fh))

    def solve_lp(self, model):
        return self._run(model_to_doc(model.relaxed(), want_duals=True))

    def solve_milp(self, model, gap_tol=1e-9, node_limit=100_000):
        return self._run(model_to_doc(model, gap_tol, node_limit))


def get_backend(name: str | None = None) -> SolverBackend:
    name = (name or os.environ.get("PBNB_BACKEND") or "builtin").lower()
    if name == "builtin":
        return BuiltIn()
    if name == "external":
        return External(os.environ.get("PBNB_EXTERNAL_CMD", ""))
    raise SolverError(f"unknown backend {name!r} (expected builtin or external)")
