"""Mixed-integer linear relaxation of the bilinear terms by binary expansion.

For a product y_i * y_j the factor y_j is written on its normalised range as

    y_j = N^L_j + (N^U_j - N^L_j) * (sum_{l=p..-1} 2^l z_{j,l} + dy_j),  0 <= dy_j <= 2^p

and every product y_i * z_{j,l} (``yhat``) and y_i * dy_j (``dw``) is replaced by
its exact (binary) or McCormick (continuous) envelope.  Smaller ``precision``
means more binaries and a tighter relaxation.

Variable layout of one scenario block, in order::

    x (n_x) | y (n_y) | w (pairs) | dy (disc) | dw (pairs) | yhat (pairs*|P|) | z (disc*|P|)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Scenario, StochasticProgram, require_valid
from .subsolve.model import EQ, GE, LE, LinearModel, RowBuilder


def check_precision(p: int) -> int:
    if int(p) != p or p > -1:
        raise ValueError(f"precision factor must be a negative integer, got {p}")
    return int(p)


def powers(p: int) -> np.ndarray:
    """2^l for l = p, ..., -1."""
    return 2.0 ** np.arange(p, 0)


@dataclass
class BlockLayout:
    n_x: int
    n_y: int
    pairs: list
    disc: list
    n_levels: int
    offset: int = 0

    def __post_init__(self):
        self.disc_pos = {j: k for k, j in enumerate(self.disc)}
        self.pair_pos = {pr: k for k, pr in enumerate(self.pairs)}
        o = self.offset
        sizes = [("x", self.n_x), ("y", self.n_y), ("w", len(self.pairs)),
                 ("dy", len(self.disc)), ("dw", len(self.pairs)),
                 ("yhat", len(self.pairs) * self.n_levels), ("z", len(self.disc) * self.n_levels)]
        self.slices = {}
        for name, size in sizes:
            self.slices[name] = slice(o, o + size)
            o += size
        self.stop = o

    @property
    def size(self) -> int:
        return self.stop - self.offset

    def col(self, block: str, k: int) -> int:
        return self.slices[block].start + k

    def yhat(self, pair_k: int, level: int) -> int:
        return self.slices["yhat"].start + pair_k * self.n_levels + level

    def z(self, disc_k: int, level: int) -> int:
        return self.slices["z"].start + disc_k * self.n_levels + level


def _add_block(rb: RowBuilder, program: StochasticProgram, sc: Scenario, lay: BlockLayout,
               p: int, lb: list, ub: list, integer: list):
    """Append rows and column data of one scenario block."""
    two = powers(p)
    L = lay.n_levels
    n_x = program.n_x
    xs = [lay.col("x", k) for k in range(n_x)]
    ys = [lay.col("y", k) for k in range(sc.n_y)]

    lb[lay.slices["x"]] = program.x_lb
    ub[lay.slices["x"]] = program.x_ub
    integer[lay.slices["x"]] = program.x_integer
    lb[lay.slices["y"]] = sc.y_lb
    ub[lay.slices["y"]] = sc.y_ub
    integer[lay.slices["y"]] = sc.y_integer
    lb[lay.slices["dy"]] = 0.0
    ub[lay.slices["dy"]] = 2.0 ** p
    lb[lay.slices["z"]] = 0.0
    ub[lay.slices["z"]] = 1.0
    integer[lay.slices["z"]] = True
    # w, dw, yhat stay free; their rows pin them

    for r in range(program.X_A.shape[0]):
        rb.add(zip(xs, program.X_A[r]), program.X_senses[r], program.X_rhs[r])

    for con in sc.constraints:
        coeffs = list(zip(xs, con.T_row)) + list(zip(ys, con.W_row))
        wsum: dict[int, float] = {}
        for i, j, v in con.U_terms:
            k = lay.pair_pos[(min(i, j), max(i, j))]
            wsum[k] = wsum.get(k, 0.0) + v
        coeffs += [(lay.col("w", k), v) for k, v in wsum.items()]
        rb.add(coeffs, con.sense, con.rhs)

    lo, hi = sc.y_lb, sc.y_ub
    for dk, j in enumerate(lay.disc):
        width = hi[j] - lo[j]
        coeffs = [(ys[j], 1.0), (lay.col("dy", dk), -width)]
        coeffs += [(lay.z(dk, l), -width * two[l]) for l in range(L)]
        rb.add(coeffs, EQ, lo[j])

    step = 2.0 ** p
    for pk, (i, j) in enumerate(lay.pairs):
        dk = lay.disc_pos[j]
        width = hi[j] - lo[j]
        w, dw, dy = lay.col("w", pk), lay.col("dw", pk), lay.col("dy", dk)
        yi = ys[i]
        coeffs = [(w, 1.0), (dw, -width), (yi, -lo[j])]
        coeffs += [(lay.yhat(pk, l), -width * two[l]) for l in range(L)]
        rb.add(coeffs, EQ, 0.0)
        # envelope of dw = y_i * dy with y_i in [lo_i, hi_i], dy in [0, 2^p]
        rb.add([(dw, 1.0), (yi, -step), (dy, -hi[i])], GE, -step * hi[i])
        rb.add([(dw, 1.0), (yi, -step), (dy, -lo[i])], LE, -step * lo[i])
        rb.add([(dw, 1.0), (dy, -lo[i])], GE, 0.0)
        rb.add([(dw, 1.0), (dy, -hi[i])], LE, 0.0)
        # yhat = y_i * z exactly, z binary
        for l in range(L):
            yh, z = lay.yhat(pk, l), lay.z(dk, l)
            rb.add([(yh, 1.0), (z, -lo[i])], GE, 0.0)
            rb.add([(yh, 1.0), (z, -hi[i])], LE, 0.0)
            rb.add([(yi, 1.0), (yh, -1.0), (z, lo[i])], GE, lo[i])
            rb.add([(yi, 1.0), (yh, -1.0), (z, hi[i])], LE, hi[i])


def _objective_block(program: StochasticProgram, sc: Scenario, lay: BlockLayout,
                     c: np.ndarray, weight: float = 1.0):
    c[lay.slices["x"]] += weight * program.c
    c[lay.slices["y"]] += weight * sc.q
    for i, j, v in sc.Q_terms:
        c[lay.col("w", lay.pair_pos[(min(i, j), max(i, j))])] += weight * v


def _layout(program: StochasticProgram, sc: Scenario, p: int, offset: int = 0) -> BlockLayout:
    pairs = sc.bilinear_pairs()
    disc = sorted({j for _, j in pairs})
    return BlockLayout(program.n_x, sc.n_y, pairs, disc, -p, offset)


@dataclass
class RnmdtSubproblem:
    """Scenario block of the relaxation as a ``LinearModel`` at zero multipliers."""

    scenario: int
    precision: int
    layout: BlockLayout
    model: LinearModel
    base_cost: np.ndarray = field(repr=False)

    @property
    def n_binaries(self) -> int:
        return len(self.layout.disc) * self.layout.n_levels

    def cost(self, mu=None) -> np.ndarray:
        """Objective vector (c + mu)'x + q'y + sum Q w."""
        c = self.base_cost.copy()
        if mu is not None:
            c[self.layout.slices["x"]] += np.asarray(mu, dtype=float)
        return c

    def bounds(self, x_lb=None, x_ub=None):
        """Column bounds with the first-stage interval replaced (intersected)."""
        lb, ub = self.model.lb.copy(), self.model.ub.copy()
        sl = self.layout.slices["x"]
        if x_lb is not None:
            lb[sl] = np.maximum(lb[sl], x_lb)
        if x_ub is not None:
            ub[sl] = np.minimum(ub[sl], x_ub)
        return lb, ub

    def x_part(self, v):
        return v[self.layout.slices["x"]]

    def y_part(self, v):
        return v[self.layout.slices["y"]]

    def w_part(self, v):
        return v[self.layout.slices["w"]]


def build_scenario_subproblem(program: StochasticProgram, s: int, p: int) -> RnmdtSubproblem:
    """Linear model of G^s (including the X rows) for scenario ``s``."""
    p = check_precision(p)
    require_valid(program)
    sc = program.scenarios[s]
    lay = _layout(program, sc, p)
    n = lay.size
    lb, ub = np.full(n, -np.inf), np.full(n, np.inf)
    integer = np.zeros(n, dtype=bool)
    rb = RowBuilder()
    _add_block(rb, program, sc, lay, p, lb, ub, integer)
    c = np.zeros(n)
    _objective_block(program, sc, lay, c)
    model = LinearModel(c, rb.matrix(n), rb.senses, rb.rhs, lb, ub, integer)
    return RnmdtSubproblem(s, p, lay, model, c.copy())


@dataclass
class MonolithModel:
    """All scenario blocks plus a shared x_bar block tied by x^s - x_bar = 0."""

    precision: int
    layouts: list
    xbar: slice
    model: LinearModel

    def bounds(self, x_lb=None, x_ub=None):
        lb, ub = self.model.lb.copy(), self.model.ub.copy()
        for sl in [lay.slices["x"] for lay in self.layouts] + [self.xbar]:
            if x_lb is not None:
                lb[sl] = np.maximum(lb[sl], x_lb)
            if x_ub is not None:
                ub[sl] = np.minimum(ub[sl], x_ub)
        return lb, ub


def build_monolith(program: StochasticProgram, p: int) -> MonolithModel:
    p = check_precision(p)
    require_valid(program)
    layouts = []
    off = 0
    for sc in program.scenarios:
        lay = _layout(program, sc, p, off)
        layouts.append(lay)
        off = lay.stop
    xbar = slice(off, off + program.n_x)
    n = xbar.stop
    lb, ub = np.full(n, -np.inf), np.full(n, np.inf)
    integer = np.zeros(n, dtype=bool)
    lb[xbar], ub[xbar] = program.x_lb, program.x_ub
    rb = RowBuilder()
    c = np.zeros(n)
    for s, (sc, lay) in enumerate(zip(program.scenarios, layouts)):
        _add_block(rb, program, sc, lay, p, lb, ub, integer)
        _objective_block(program, sc, lay, c, program.probabilities[s])
    for lay in layouts:
        for k in range(program.n_x):
            rb.add([(lay.col("x", k), 1.0), (xbar.start + k, -1.0)], EQ, 0.0)
    model = LinearModel(c, rb.matrix(n), rb.senses, rb.rhs, lb, ub, integer)
    return MonolithModel(p, layouts, xbar, model)


def solve_monolith(program: StochasticProgram, p: int, backend=None, x_lb=None, x_ub=None,
                   gap_tol: float = 1e-9, node_limit: int = 1_000_000):
    """Solve the undecomposed relaxation; returns the backend's ``SolveResult``."""
    from .subsolve.backend import get_backend

    backend = backend or get_backend()
    mono = build_monolith(program, p)
    lb, ub = mono.bounds(x_lb, x_ub)
    res = backend.solve_milp(mono.model.with_bounds(lb, ub), gap_tol, node_limit)
    res.info["monolith"] = mono
    return res


def relaxation_gap_bound(scenario: Scenario, p: int) -> float:
    """Widest residual interval (N^U - N^L) * 2^p over the discretised variables."""
    p = check_precision(p)
    disc = sorted({j for _, j in scenario.bilinear_pairs()})
    if not disc:
        return 0.0
    widths = scenario.y_ub[disc] - scenario.y_lb[disc]
    return float(widths.max() * 2.0 ** p)


def expand(t: float, p: int):
    """Greedy binary digits of ``t`` in [0, 1] at levels p..-1 plus the remainder."""
    two = powers(p)
    bits = np.zeros(two.size)
    rest = float(t)
    for l in range(two.size - 1, -1, -1):  # -1 first
        if rest >= two[l]:
            bits[l] = 1.0
            rest -= two[l]
    return bits, rest


def lift(sub: RnmdtSubproblem, x, y) -> np.ndarray:
    """Full block vector for an original-space point (x, y).

    Binaries come from the greedy expansion of y_j; products are filled with
    their exact values, so every row holds whenever (x, y) is feasible.
    """
    lay = sub.layout
    sc_lo = sub.model.lb[lay.slices["y"]]
    sc_hi = sub.model.ub[lay.slices["y"]]
    v = np.zeros(lay.size)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v[lay.slices["x"]] = x
    v[lay.slices["y"]] = y
    dys = {}
    for dk, j in enumerate(lay.disc):
        width = sc_hi[j] - sc_lo[j]
        t = 0.0 if width == 0 else (y[j] - sc_lo[j]) / width
        bits, rest = expand(min(max(t, 0.0), 1.0), sub.precision)
        for l in range(lay.n_levels):
            v[lay.z(dk, l)] = bits[l]
        v[lay.col("dy", dk)] = rest
        dys[j] = (bits, rest)
    for pk, (i, j) in enumerate(lay.pairs):
        bits, rest = dys[j]
        v[lay.col("w", pk)] = y[i] * y[j]
        v[lay.col("dw", pk)] = y[i] * rest
        for l in range(lay.n_levels):
            v[lay.yhat(pk, l)] = y[i] * bits[l]
    return v
