"""Dual-bound branch-and-bound over first-stage bounds.

Each node restricts the first-stage variables to a box.  Its bound is the
scenario dual (bundle or FWPH) on that box.  The scenario minimisers give the
average x_bar and the dispersion sigma_i = max_s x^s_i - min_s x^s_i.  A node
branches on a fractional integer component of x_bar first, then on the
component with the largest dispersion; a node with integral x_bar and no
dispersion yields a candidate directly.  Every processed node also tries its
rounded x_bar as an incumbent, evaluated by solving the scenario recourse
problems with x fixed.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bundle import BundleParams, run_bundle
from .fwph import FwphParams, run_fwph
from .lagrangian import DualEvaluator, NodeInfeasible
from .model import StochasticProgram, require_valid
from .rnmdt import check_precision
from .subsolve.backend import SolverBackend
from .trace import NullTrace

FRAC_TOL = 1e-6
FATHOM_TOL = 1e-9


def dispersion(xs) -> np.ndarray:
    """Per-component range of the scenario first-stage solutions."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    return xs.max(axis=0) - xs.min(axis=0)


def _fractionality(v: np.ndarray) -> np.ndarray:
    return np.abs(v - np.round(v))


def rounding_heuristic(x_bar, integer, lb=None, ub=None) -> np.ndarray:
    """Round integer components (ties to even) and clip into the box."""
    x = np.array(x_bar, dtype=float)
    integer = np.asarray(integer, dtype=bool)
    x[integer] = np.round(x[integer])
    if lb is not None:
        x = np.maximum(x, lb)
    if ub is not None:
        x = np.minimum(x, ub)
    return x


@dataclass
class Child:
    lb: np.ndarray
    ub: np.ndarray
    kind: str          # "int" or "nac"
    index: int
    side: str          # "down" or "up"


def branch(lb, ub, x_bar, sigma, integer, eps_bb: float = 1e-6, eps_nac: float = 1e-6,
           keep_integer_point: bool = False) -> list:
    """Children of a node, or ``[]`` for a leaf candidate.

    Integrality first: most fractional integer component of x_bar, split at
    floor/ceil.  Otherwise the largest dispersion above ``eps_nac``, split at
    x_bar -/+ eps_bb.  With ``keep_integer_point`` an integer component that
    is already integral in x_bar is split as x <= x_bar / x >= x_bar + 1, so
    the value x_bar itself stays in the tree.  Empty children are dropped.
    """
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    x_bar = np.asarray(x_bar, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    integer = np.asarray(integer, dtype=bool)
    out = []

    def make(i, lo_i, hi_i, kind, side):
        clb, cub = lb.copy(), ub.copy()
        if lo_i is not None:
            clb[i] = max(clb[i], lo_i)
        if hi_i is not None:
            cub[i] = min(cub[i], hi_i)
        if integer[i]:
            clb[i], cub[i] = math.ceil(clb[i] - 1e-9), math.floor(cub[i] + 1e-9)
        if clb[i] <= cub[i]:
            out.append(Child(clb, cub, kind, int(i), side))

    frac = np.where(integer, _fractionality(x_bar), 0.0)
    if frac.size and frac.max() > FRAC_TOL:
        i = int(np.flatnonzero(frac >= frac.max() - 1e-12)[0])
        make(i, None, math.floor(x_bar[i]), "int", "down")
        make(i, math.ceil(x_bar[i]), None, "int", "up")
        return out
    if sigma.size and sigma.max() > eps_nac:
        i = int(np.flatnonzero(sigma >= sigma.max() - 1e-12)[0])
        if keep_integer_point and integer[i]:
            v = float(np.round(x_bar[i]))
            make(i, None, v, "nac", "down")
            make(i, v + 1.0, None, "nac", "up")
        else:
            make(i, None, x_bar[i] - eps_bb, "nac", "down")
            make(i, x_bar[i] + eps_bb, None, "nac", "up")
    return out


@dataclass(order=False)
class BnbNode:
    id: int
    parent: Optional[int]
    depth: int
    lb: np.ndarray
    ub: np.ndarray
    parent_bound: float
    mu: Optional[np.ndarray]


@dataclass
class BnbLimits:
    time_limit: float = 3600.0
    node_limit: int = 100_000


@dataclass
class BnbResult:
    status: str                    # "optimal" | "infeasible" | "limit"
    x: Optional[np.ndarray]
    z_ub: float
    z_lb: float
    gap: float
    nodes: int
    iterations: int
    node_log: list = field(default_factory=list)
    recourse: list = field(default_factory=list, repr=False)
    wall_time: float = 0.0


def relative_gap(z_ub: float, z_lb: float) -> float:
    if not (math.isfinite(z_ub) and math.isfinite(z_lb)):
        return math.inf
    return max(0.0, z_ub - z_lb) / max(1e-12, abs(z_lb))


def run_pbnb(program: StochasticProgram, p: int, method: str = "bundle",
             bundle_params: BundleParams | None = None, fwph_params: FwphParams | None = None,
             limits: BnbLimits | None = None, eps_bb: float = 1e-6, eps_nac: float = 1e-6,
             backend: SolverBackend | None = None, workers: int = 1, trace=None,
             keep_integer_point: bool = True) -> BnbResult:
    """Solve the relaxation at precision ``p`` to optimality by branch-and-bound.

    ``method`` picks the node dual solver: "bundle" or "fwph".
    """
    p = check_precision(p)
    require_valid(program)
    if method not in ("bundle", "fwph"):
        raise ValueError(f"unknown dual method {method!r}")
    limits = limits or BnbLimits()
    trace = trace or NullTrace()
    t0 = time.perf_counter()
    ev = DualEvaluator(program, p, backend, workers)
    probs = program.probabilities
    integer = program.x_integer

    z_ub, incumbent, recourse = math.inf, None, []
    closed_min = math.inf      # smallest bound among closed (leaf / fathomed) nodes
    heap: list = []
    root = BnbNode(0, None, 0, program.x_lb.copy(), program.x_ub.copy(), -math.inf, None)
    heapq.heappush(heap, (root.parent_bound, root.id, root))
    next_id = 1
    n_nodes = 0
    iterations = 0
    log = []
    hit_limit = False

    def try_incumbent(x_cand):
        nonlocal z_ub, incumbent, recourse
        val, sols = ev.recourse(x_cand)
        if val is not None and val < z_ub:
            z_ub, incumbent, recourse = val, np.array(x_cand), sols
            trace.emit("incumbent", z_ub=z_ub, x=incumbent)
            return True
        return False

    while heap:
        if n_nodes >= limits.node_limit or time.perf_counter() - t0 > limits.time_limit:
            hit_limit = True
            break
        _, _, node = heapq.heappop(heap)
        if node.parent_bound >= z_ub - FATHOM_TOL:
            closed_min = min(closed_min, node.parent_bound)
            entry = {"node": node.id, "parent": node.parent, "depth": node.depth,
                     "bound": node.parent_bound, "action": "fathomed", "iterations": 0}
            log.append(entry)
            trace.emit("node", **entry)
            continue
        n_nodes += 1
        trace.context = {"node": node.id}
        trace.emit("node_start", parent=node.parent, x_lb=node.lb, x_ub=node.ub)
        entry = {"node": node.id, "parent": node.parent, "depth": node.depth}
        try:
            if method == "bundle":
                res = run_bundle(ev, node.mu, node.lb, node.ub, bundle_params, trace)
            else:
                res = run_fwph(ev, node.mu, node.lb, node.ub, fwph_params, trace)
        except NodeInfeasible:
            trace.context = {}
            entry.update(bound=math.inf, action="infeasible", iterations=0)
            log.append(entry)
            trace.emit("node", **entry)
            continue
        trace.context = {}
        iterations += res.iterations
        z_node = max(res.value, node.parent_bound)
        xs = res.evaluation.x
        x_bar = probs @ xs
        sigma = dispersion(xs)
        entry.update(dual=res.value, bound=z_node, iterations=res.iterations,
                     x_bar=x_bar.tolist(), sigma_max=float(sigma.max(initial=0.0)))

        if z_node >= z_ub - FATHOM_TOL:
            closed_min = min(closed_min, z_node)
            entry["action"] = "fathomed"
        else:
            children = branch(node.lb, node.ub, x_bar, sigma, integer, eps_bb, eps_nac,
                              keep_integer_point)
            if not children:
                # dispersion-free, integral: the dual minimisers agree on x_bar
                x_cand = rounding_heuristic(x_bar, integer, node.lb, node.ub)
                if not try_incumbent(x_cand):
                    try_incumbent(rounding_heuristic(xs[0], integer, node.lb, node.ub))
                closed_min = min(closed_min, z_node)
                entry["action"] = "incumbent"
            else:
                try_incumbent(rounding_heuristic(x_bar, integer, node.lb, node.ub))
                if z_node >= z_ub - FATHOM_TOL:
                    closed_min = min(closed_min, z_node)
                    entry["action"] = "fathomed"
                else:
                    entry["action"] = "branched-" + children[0].kind
                    entry["branch_index"] = children[0].index
                    entry["children"] = []
                    for ch in children:
                        child = BnbNode(next_id, node.id, node.depth + 1, ch.lb, ch.ub, z_node,
                                        np.array(res.mu, dtype=float))
                        entry["children"].append(next_id)
                        heapq.heappush(heap, (z_node, next_id, child))
                        next_id += 1
        entry["z_ub"] = z_ub
        log.append(entry)
        trace.emit("node", **entry)

    open_min = min((item[0] for item in heap), default=math.inf)
    z_lb = min(z_ub, closed_min, open_min)
    if hit_limit:
        status = "limit"
    elif math.isfinite(z_ub):
        status = "optimal"
    else:
        status = "infeasible"
        z_lb = math.inf
    gap = relative_gap(z_ub, z_lb) if math.isfinite(z_ub) else math.inf
    if status == "infeasible":
        gap = math.nan
    wall = time.perf_counter() - t0
    trace.emit("result", status=status, z_ub=z_ub, z_lb=z_lb, gap=gap, nodes=n_nodes,
               iterations=iterations)
    return BnbResult(status, incumbent, z_ub, z_lb, gap, n_nodes, iterations, log, recourse, wall)
