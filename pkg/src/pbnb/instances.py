"""Instance generation, the TINY-1 fixture and file I/O.

Instances are JSON documents checked against ``instance.schema.json``.
Floats are written with ``repr`` precision, so a write/read round trip
reproduces every number bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

from .model import Scenario, ScenarioConstraint, StochasticProgram, validate
from .subsolve.model import EQ

FORMAT = "pbnb-instance"
VERSION = 1

# per-scenario (first-stage vars, second-stage vars, constraints)
SIZE_CLASSES = {"S": (100, 100, 100), "L": (200, 200, 200)}
# high-density instances 1-5: (scenarios, first-stage, second-stage, constraints)
HIGH_DENSITY_DIMS = {1: (15, 30, 25, 25), 2: (20, 30, 30, 20), 3: (20, 40, 15, 15),
                     4: (30, 30, 20, 15), 5: (40, 20, 10, 15)}


class InstanceError(ValueError):
    """Malformed or invalid instance document."""


@dataclass
class GeneratorConfig:
    """Knobs of the random generator.

    Bounds, coefficient ranges and the feasible-point construction are this
    package's own choices; they are copied into each generated file under
    ``generator``.
    """

    n_scenarios: int
    n_x: int
    n_y: int
    n_rows: int
    density: float = 0.01
    seed: int = 0
    linear_density: float = 1.0
    x_bounds: tuple = (0.0, 10.0)
    y_bounds: tuple = (-5.0, 5.0)
    coef_range: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.density <= 1.0) or not (0.0 < self.linear_density <= 1.0):
            raise ValueError("densities must lie in (0, 1]")
        if min(self.n_scenarios, self.n_x, self.n_y, self.n_rows) <= 0:
            raise ValueError("dimensions must be positive")

    @classmethod
    def size_class(cls, size: str, n_scenarios: int, density: float = 0.01, seed: int = 0):
        n_x, n_y, m = SIZE_CLASSES[size]
        return cls(n_scenarios, n_x, n_y, m, density, seed)

    @classmethod
    def high_density(cls, instance: int, density: float = 0.9, seed: int = 0):
        S, n_x, n_y, m = HIGH_DENSITY_DIMS[instance]
        return cls(S, n_x, n_y, m, density, seed)


def _pattern(rng, n: int, density: float):
    """Distinct positions of an n-by-n matrix at ``density``, folded to i <= j.

    The count is round(density * n^2) but at least one, so tiny matrices
    still carry a product.
    """
    k = max(1, int(round(density * n * n)))
    flat = np.sort(rng.choice(n * n, size=min(k, n * n), replace=False))
    return sorted({(min(f // n, f % n), max(f // n, f % n)) for f in flat.tolist()})


def _coef(rng, r, size=None):
    return rng.uniform(-r, r, size)


def generate(config: GeneratorConfig) -> StochasticProgram:
    """Random program; every scenario is feasible at a sampled point (x0, y0).

    All first-stage variables are integer, all second-stage ones continuous.
    Every row is an equality whose rhs is evaluated at the sampled point.
    """
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    r = cfg.coef_range
    c = _coef(rng, r, cfg.n_x)
    xl, xu = cfg.x_bounds
    yl, yu = cfg.y_bounds
    x0 = rng.integers(int(xl), int(xu) + 1, cfg.n_x).astype(float)
    scenarios, witness = [], []
    for _ in range(cfg.n_scenarios):
        q = _coef(rng, r, cfg.n_y)
        Q = [(i, j, float(_coef(rng, r))) for i, j in _pattern(rng, cfg.n_y, cfg.density)]
        y0 = rng.uniform(yl, yu, cfg.n_y)
        rows = []
        for _m in range(cfg.n_rows):
            T = _coef(rng, r, cfg.n_x) * (rng.random(cfg.n_x) < cfg.linear_density)
            W = _coef(rng, r, cfg.n_y) * (rng.random(cfg.n_y) < cfg.linear_density)
            U = [(i, j, float(_coef(rng, r))) for i, j in _pattern(rng, cfg.n_y, cfg.density)]
            h = float(T @ x0 + W @ y0 + sum(v * y0[i] * y0[j] for i, j, v in U))
            rows.append(ScenarioConstraint(T, W, U, h, EQ))
        scenarios.append(Scenario(q, Q, rows, np.full(cfg.n_y, yl), np.full(cfg.n_y, yu)))
        witness.append({"x": x0.tolist(), "y": y0.tolist()})
    probs = np.full(cfg.n_scenarios, 1.0 / cfg.n_scenarios)
    meta = {"generator": {"kind": "random", **_jsonable(asdict(cfg)),
                          "choices": "x integer in x_bounds, y continuous in y_bounds, "
                                     "coefficients uniform in [-coef_range, coef_range], "
                                     "equality rows with rhs from a sampled feasible point",
                          "feasible_point": witness}}
    return StochasticProgram(c, np.full(cfg.n_x, xl), np.full(cfg.n_x, xu),
                             np.ones(cfg.n_x, dtype=bool), scenarios, probs,
                             name=f"rand-{cfg.n_scenarios}x{cfg.n_x}x{cfg.n_y}x{cfg.n_rows}"
                                  f"-d{cfg.density:g}-s{cfg.seed}", meta=meta)


def micro_instance(seed: int) -> StochasticProgram:
    """Desk-size random program for oracle checks.

    2-4 equiprobable scenarios, 1-3 integer x in [0, 3], three y in [-2, 2],
    one equality row per scenario.  At most two bilinear pairs, all among
    y0 and y1; y2 enters only linearly (with a nonzero coefficient in the
    row), so fixing (x, y0, y1) determines y2.
    """
    rng = np.random.default_rng(1000 + seed)
    S = int(rng.integers(2, 5))
    n_x = int(rng.integers(1, 4))
    pool = [(0, 0), (0, 1), (1, 1)]
    c = np.round(rng.uniform(-5, 5, n_x), 3)
    x0 = rng.integers(0, 4, n_x).astype(float)
    scenarios = []
    for _ in range(S):
        k = int(rng.integers(1, 3))
        pairs = [pool[t] for t in sorted(rng.choice(3, size=k, replace=False))]
        q = np.round(rng.uniform(-5, 5, 3), 3)
        Q = [(i, j, float(np.round(rng.uniform(-3, 3), 3))) for i, j in pairs]
        U = [(i, j, float(np.round(rng.uniform(-2, 2), 3))) for i, j in pairs]
        T = np.round(rng.uniform(-2, 2, n_x), 3)
        W = np.round(rng.uniform(-2, 2, 3), 3)
        W[2] = np.round(rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 2.0), 3)
        y0 = np.round(rng.uniform(-1, 1, 3), 3)
        h = float(T @ x0 + W @ y0 + sum(v * y0[i] * y0[j] for i, j, v in U))
        scenarios.append(Scenario(q, Q, [ScenarioConstraint(T, W, U, h, EQ)],
                                  np.full(3, -2.0), np.full(3, 2.0)))
    probs = np.full(S, 1.0 / S)
    meta = {"generator": {"kind": "micro", "seed": seed}}
    return StochasticProgram(c, np.zeros(n_x), np.full(n_x, 3.0), np.ones(n_x, dtype=bool),
                             scenarios, probs, name=f"micro-{seed}", meta=meta)


# TINY-1: x integer in [0, 5], y in [0, 2]; per scenario
#   min c x + q y + Q y^2   s.t.  T x + W y + U y^2 = h
TINY1 = {
    "c": -1.25,
    "scenarios": [
        {"q": 1.0, "Q": 2.0, "T": -0.5, "W": 1.0, "U": 1.0, "h": 1.75},
        {"q": -1.0, "Q": 1.0, "T": -0.75, "W": -0.5, "U": 1.0, "h": 0.0},
    ],
}


def tiny_fixture() -> StochasticProgram:
    """The canonical two-scenario fixture (one x, one y, one square term)."""
    scs = []
    for d in TINY1["scenarios"]:
        con = ScenarioConstraint([d["T"]], [d["W"]], [(0, 0, d["U"])], d["h"], EQ)
        scs.append(Scenario([d["q"]], [(0, 0, d["Q"])], [con], [0.0], [2.0]))
    return StochasticProgram([TINY1["c"]], [0.0], [5.0], [True], scs, [0.5, 0.5],
                             name="TINY-1", meta={"generator": {"kind": "fixture"}})


# -- serialisation ---------------------------------------------------------

def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def _bounds_out(arr, sign):
    out = []
    for v in arr:
        if math.isfinite(v):
            out.append(float(v))
        else:
            if (v > 0) != (sign > 0):
                raise InstanceError("bound with the wrong infinite sign")
            out.append(None)
    return out


def _bounds_in(arr, fill):
    return np.array([fill if v is None else v for v in arr], dtype=float)


def program_to_doc(program: StochasticProgram) -> dict:
    fs = {"c": [float(v) for v in program.c],
          "lb": _bounds_out(program.x_lb, -1), "ub": _bounds_out(program.x_ub, 1),
          "integer": [bool(v) for v in program.x_integer]}
    if program.X_A.shape[0]:
        fs["constraints"] = {"A": program.X_A.tolist(), "senses": list(program.X_senses),
                             "rhs": [float(v) for v in program.X_rhs]}
    scs = []
    for sc in program.scenarios:
        scs.append({
            "q": [float(v) for v in sc.q],
            "Q": [[i, j, v] for i, j, v in sc.Q_terms],
            "y_lb": _bounds_out(sc.y_lb, -1), "y_ub": _bounds_out(sc.y_ub, 1),
            "y_integer": [bool(v) for v in sc.y_integer],
            "constraints": [{"T": [float(v) for v in con.T_row],
                             "W": [float(v) for v in con.W_row],
                             "U": [[i, j, v] for i, j, v in con.U_terms],
                             "rhs": con.rhs, "sense": con.sense}
                            for con in sc.constraints],
        })
    return {"format": FORMAT, "version": VERSION, "name": program.name,
            "generator": program.meta.get("generator"),
            "first_stage": fs, "probabilities": [float(v) for v in program.probabilities],
            "scenarios": scs}


def _schema() -> dict:
    with resources.files("pbnb").joinpath("instance.schema.json").open() as fh:
        return json.load(fh)


def program_from_doc(doc: dict, check: bool = True) -> StochasticProgram:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InstanceError(f"schema violation at {where}: {exc.message}") from None
    fs = doc["first_stage"]
    n_x = len(fs["c"])
    cons = fs.get("constraints")
    scs = []
    for sc in doc["scenarios"]:
        rows = [ScenarioConstraint(r["T"], r["W"], [tuple(t) for t in r.get("U", [])],
                                   r["rhs"], r["sense"]) for r in sc["constraints"]]
        ny = len(sc["q"])
        scs.append(Scenario(sc["q"], [tuple(t) for t in sc["Q"]], rows,
                            _bounds_in(sc["y_lb"], -np.inf), _bounds_in(sc["y_ub"], np.inf),
                            sc.get("y_integer", [False] * ny)))
    meta = {"generator": doc["generator"]} if doc.get("generator") is not None else {}
    try:
        program = StochasticProgram(
            fs["c"], _bounds_in(fs["lb"], -np.inf), _bounds_in(fs["ub"], np.inf), fs["integer"],
            scs, doc["probabilities"],
            None if cons is None else np.array(cons["A"], dtype=float).reshape(-1, n_x),
            () if cons is None else cons["senses"], None if cons is None else cons["rhs"],
            doc.get("name", ""), meta)
    except ValueError as exc:
        raise InstanceError(f"inconsistent instance: {exc}") from None
    if check:
        rep = validate(program)
        if not rep.ok:
            raise InstanceError(f"invalid instance: {rep}")
    return program


def dumps(program: StochasticProgram) -> str:
    return json.dumps(program_to_doc(program), indent=1, allow_nan=False) + "\n"


def loads(text: str, check: bool = True) -> StochasticProgram:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return program_from_doc(doc, check)


def write_instance(program: StochasticProgram, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(program))


def read_instance(path, check: bool = True) -> StochasticProgram:
    with open(path) as fh:
        text = fh.read()
    return loads(text, check)


# -- result records ---------------------------------------------------------

@dataclass
class ResultRecord:
    instance: str
    method: str
    p: Optional[int]
    z_ub: Optional[float]
    z_lb: Optional[float]
    gap: Optional[float]
    nodes: int
    iterations: int
    wall_time: float
    status: str = ""
    backend: str = "builtin"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        for k in ("z_ub", "z_lb", "gap"):
            if d[k] is not None and not math.isfinite(d[k]):
                d[k] = None
        return json.dumps(d, allow_nan=False)


def append_result(record: ResultRecord, path) -> None:
    with open(path, "a") as fh:
        fh.write(record.to_json() + "\n")


def read_results(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(ResultRecord(**json.loads(line)))
    return out
