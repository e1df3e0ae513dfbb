"""Command-line front end: ``pbnb generate | solve | bench | compare``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import warnings
from dataclasses import fields
from pathlib import Path

from .bnb import BnbLimits, relative_gap, run_pbnb
from .bundle import BundleParams
from .fwph import FwphParams
from .instances import (HIGH_DENSITY_DIMS, GeneratorConfig, InstanceError, ResultRecord,
                        append_result, generate, micro_instance, read_instance, tiny_fixture,
                        write_instance)
from .model import ProgramError
from .rnmdt import solve_monolith
from .subsolve.backend import get_backend
from .subsolve.model import SolverError, Status
from .trace import NullTrace, Trace

METHODS = ("pbnb-bm", "pbnb-fwph", "monolith")
TABLE_HEADER = ["size", "|S|", "p", "method", "time", "nodes", "iterations", "gap", "backend",
                "status"]

# desk-scale stand-ins for the benchmark grids
LOW_DENSITY_SIZES = {"S": (2, 3, 2), "L": (3, 4, 3)}
LOW_DENSITY_SCENARIOS = (3, 6, 9)
LOW_DENSITY_P = (-2, -1)
HIGH_DENSITY_SCALE = 5

EXIT_OK, EXIT_ERROR, EXIT_LIMIT = 0, 1, 2


_INT_PARAMS = {"i_max", "i_min", "k_max", "t_max"}


class UsageError(Exception):
    pass


def _param_names(cls) -> set:
    return {f.name for f in fields(cls)}


def parse_overrides(items) -> dict:
    """``name=value`` pairs into a dict of numbers."""
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"parameter override {item!r} is not name=value")
        k, v = item.split("=", 1)
        try:
            num = float(v)
        except ValueError:
            raise UsageError(f"parameter {k!r}: {v!r} is not a number") from None
        k = k.strip()
        out[k] = int(num) if k in _INT_PARAMS else num
    allowed = _param_names(BundleParams) | _param_names(FwphParams) | {"eps_bb", "eps_nac"}
    unknown = sorted(set(out) - allowed)
    if unknown:
        raise UsageError(f"unknown parameter(s): {', '.join(unknown)}")
    return out


def _split_params(method: str, overrides: dict):
    """Route overrides to the chosen dual method (``eps``/``k_max`` are shared names)."""
    bp = {k: v for k, v in overrides.items() if k in _param_names(BundleParams)}
    fp = {k: v for k, v in overrides.items() if k in _param_names(FwphParams)}
    try:
        bundle = BundleParams(**bp) if method == "pbnb-bm" else None
        fw = FwphParams(**fp) if method == "pbnb-fwph" else None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid parameters: {exc}") from None
    return bundle, fw


def check_p(p) -> int:
    if p is None or int(p) != p or p > -1:
        raise UsageError(f"precision p must be a negative integer, got {p}")
    return int(p)


def solve_program(program, method: str, p: int, instance_name: str = "", overrides=None,
                  time_limit: float = 3600.0, node_limit: int = 100_000, workers: int = 1,
                  trace=None, backend=None) -> ResultRecord:
    """Run one method on one program and return its result record."""
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r} (choose from {', '.join(METHODS)})")
    p = check_p(p)
    overrides = dict(overrides or {})
    backend = backend or get_backend()
    trace = trace or NullTrace()
    t0 = time.perf_counter()
    name = instance_name or program.name
    if method == "monolith":
        res = solve_monolith(program, p, backend, node_limit=node_limit)
        wall = time.perf_counter() - t0
        if res.status is Status.OPTIMAL:
            z_ub = res.objective
            z_lb = res.bound if math.isfinite(res.bound) else res.objective
            z_lb = min(z_lb, z_ub)
            status = "optimal"
        elif res.status is Status.INFEASIBLE:
            z_ub, z_lb, status = math.inf, math.inf, "infeasible"
        elif res.x is not None:
            z_ub, z_lb, status = res.objective, res.bound, "limit"
        else:
            z_ub, z_lb, status = math.inf, res.bound, "limit"
        gap = relative_gap(z_ub, z_lb) if status != "infeasible" else math.nan
        trace.emit("result", method=method, status=status, z_ub=z_ub, z_lb=z_lb, gap=gap,
                   nodes=res.nodes, iterations=res.iterations)
        return ResultRecord(name, method, p, z_ub, z_lb, gap, res.nodes, res.iterations, wall,
                            status, backend.name)
    eps_bb = overrides.pop("eps_bb", 1e-6)
    eps_nac = overrides.pop("eps_nac", 1e-6)
    bundle, fw = _split_params(method, overrides)
    res = run_pbnb(program, p, "bundle" if method == "pbnb-bm" else "fwph", bundle, fw,
                   BnbLimits(time_limit, node_limit), eps_bb, eps_nac, backend, workers, trace)
    extra = {"x": None if res.x is None else res.x.tolist()}
    return ResultRecord(name, method, p, res.z_ub, res.z_lb, res.gap, res.nodes, res.iterations,
                        res.wall_time, res.status, backend.name, extra)


def format_gap(gap) -> str:
    """Gap in percent with two decimals."""
    if gap is None or (isinstance(gap, float) and not math.isfinite(gap)):
        return "nan" if gap is None or math.isnan(gap) else "inf"
    return f"{100.0 * gap:.2f}"


def summary_line(rec: ResultRecord) -> str:
    def num(v):
        return "n/a" if v is None or not math.isfinite(v) else f"{v:.10g}"
    return (f"{rec.instance}  method={rec.method}  p={rec.p}  status={rec.status}  "
            f"UB={num(rec.z_ub)}  LB={num(rec.z_lb)}  gap={format_gap(rec.gap)}%  "
            f"nodes={rec.nodes}  iterations={rec.iterations}  time={rec.wall_time:.2f}s")


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    if args.tiny:
        program = tiny_fixture()
    elif args.micro is not None:
        program = micro_instance(args.micro)
    else:
        if args.size:
            cfg = GeneratorConfig.size_class(args.size, args.scenarios or 50, args.density, args.seed)
        elif args.high_density:
            cfg = GeneratorConfig.high_density(args.high_density, args.density, args.seed)
        else:
            if not all([args.scenarios, args.nx, args.ny, args.rows]):
                raise UsageError("give --size, --high-density, --tiny, --micro, or all of "
                                 "--scenarios/--nx/--ny/--rows")
            cfg = GeneratorConfig(args.scenarios, args.nx, args.ny, args.rows, args.density,
                                  args.seed)
        program = generate(cfg)
    write_instance(program, args.output)
    print(f"wrote {program.name}: {program.n_scenarios} scenarios, "
          f"{program.total_variables()} variables -> {args.output}")
    return EXIT_OK


def cmd_solve(args) -> int:
    overrides = parse_overrides(args.param)
    check_p(args.p)
    program = read_instance(args.instance)
    trace = Trace(args.trace, include_mu=not args.no_mu, keep=False) if args.trace else None
    try:
        rec = solve_program(program, args.method, args.p, Path(args.instance).stem, overrides,
                            args.time_limit, args.node_limit, args.workers, trace)
    finally:
        if trace:
            trace.close()
    if args.results:
        append_result(rec, args.results)
    print(summary_line(rec))
    if rec.status == "optimal":
        return EXIT_OK
    if rec.status == "limit":
        return EXIT_LIMIT
    print(f"error: instance is {rec.status}", file=sys.stderr)
    return EXIT_ERROR


def _bench_jobs(args):
    """(size label, program factory, p values) for the chosen suite."""
    seeds = range(args.seeds)
    if args.suite == "low-density":
        for size in args.sizes or LOW_DENSITY_SIZES:
            n_x, n_y, rows = LOW_DENSITY_SIZES[size]
            for S in args.scenarios or LOW_DENSITY_SCENARIOS:
                for seed in seeds:
                    cfg = GeneratorConfig(S, n_x, n_y, rows, 0.01, seed)
                    yield size, (lambda c=cfg: generate(c)), args.p or LOW_DENSITY_P
    elif args.suite == "high-density":
        for inst, dims in HIGH_DENSITY_DIMS.items():
            S, n_x, n_y, rows = (max(1, math.ceil(d / HIGH_DENSITY_SCALE)) for d in dims)
            cfg = GeneratorConfig(S, n_x, n_y, rows, 0.9, inst - 1)
            yield str(inst), (lambda c=cfg: generate(c)), args.p or (-1,)
    else:
        manifest = json.loads(Path(args.suite).read_text())
        base = Path(args.suite).parent
        for entry in manifest.get("entries", []):
            ps = entry.get("p", [-2])
            if "instance" in entry:
                path = base / entry["instance"]
                yield entry.get("size", path.stem), (lambda q=path: read_instance(q)), ps
            else:
                gen = dict(entry["generate"])
                for seed in entry.get("seeds", [gen.pop("seed", 0)]):
                    cfg = GeneratorConfig(**{**gen, "seed": seed})
                    yield entry.get("size", "custom"), (lambda c=cfg: generate(c)), ps


def _mean(vals):
    vals = [v for v in vals if v is not None and math.isfinite(v)]
    return sum(vals) / len(vals) if vals else math.nan


def bench_rows(args) -> list:
    """Run the suite and average over seeds per (size, |S|, p, method)."""
    overrides = parse_overrides(args.param)
    methods = args.methods or list(METHODS)
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    backend = get_backend()
    groups: dict = {}
    for size, factory, ps in _bench_jobs(args):
        try:
            program = factory()
        except (InstanceError, ProgramError, OSError) as exc:
            key = (size, "?", "?", "?")
            groups.setdefault(key, []).append(("error", str(exc)))
            continue
        for p in ps:
            for m in methods:
                key = (size, program.n_scenarios, p, m)
                try:
                    rec = solve_program(program, m, p, program.name, overrides, args.time_limit,
                                        args.node_limit, args.workers, backend=backend)
                    groups.setdefault(key, []).append(("ok", rec))
                except (SolverError, UsageError, ValueError, RuntimeError) as exc:
                    groups.setdefault(key, []).append(("error", str(exc)))
                if args.results and groups[key][-1][0] == "ok":
                    append_result(groups[key][-1][1], args.results)
    rows = []
    for (size, S, p, m), runs in groups.items():
        recs = [r for kind, r in runs if kind == "ok"]
        errors = [r for kind, r in runs if kind == "error"]
        statuses = sorted({r.status for r in recs} | ({"error"} if errors else set()))
        rows.append({
            "size": size, "|S|": S, "p": p, "method": m,
            "time": f"{_mean([r.wall_time for r in recs]):.3f}",
            "nodes": f"{_mean([r.nodes for r in recs]):g}",
            "iterations": f"{_mean([r.iterations for r in recs]):g}",
            "gap": format_gap(_mean([r.gap for r in recs])),
            "backend": backend.name,
            "status": "+".join(statuses),
        })
    return rows


def write_table(rows, out, delimiter=","):
    w = csv.DictWriter(out, TABLE_HEADER, delimiter=delimiter, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)


def cmd_bench(args) -> int:
    rows = bench_rows(args)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            write_table(rows, fh, args.delimiter)
    else:
        write_table(rows, sys.stdout, args.delimiter)
    return EXIT_OK


def cmd_compare(args) -> int:
    overrides = parse_overrides(args.param)
    check_p(args.p)
    program = read_instance(args.instance)
    recs = [solve_program(program, m, args.p, Path(args.instance).stem, overrides,
                          args.time_limit, args.node_limit, args.workers)
            for m in args.methods]
    for rec in recs:
        print(summary_line(rec))
        if args.results:
            append_result(rec, args.results)
    ubs = [r.z_ub for r in recs if r.z_ub is not None and math.isfinite(r.z_ub)]
    spread = max(ubs) - min(ubs) if len(ubs) == len(recs) else math.inf
    agree = spread <= args.tol
    print(f"UB spread {spread:.3g} ({'agree' if agree else 'DISAGREE'} at tol {args.tol:g})")
    if any(r.status == "limit" for r in recs):
        return EXIT_LIMIT
    return EXIT_OK if agree else EXIT_ERROR


# ---------------------------------------------------------------- parser

def _add_solver_flags(sp):
    sp.add_argument("-p", type=int, default=-2, help="precision factor (negative integer)")
    sp.add_argument("--time-limit", type=float, default=3600.0, help="seconds (default 3600)")
    sp.add_argument("--node-limit", type=int, default=100_000)
    sp.add_argument("--workers", type=int, default=1, help="parallel scenario solves")
    sp.add_argument("--param", action="append", metavar="NAME=VALUE",
                    help="algorithm parameter override, e.g. u_min=1e-3 or tau=2")
    sp.add_argument("--results", help="append JSON-lines result records here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pbnb", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random or fixture instance")
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--tiny", action="store_true", help="the two-scenario fixture")
    g.add_argument("--micro", type=int, metavar="SEED", help="seeded micro instance")
    g.add_argument("--size", choices=["S", "L"])
    g.add_argument("--high-density", type=int, choices=sorted(HIGH_DENSITY_DIMS))
    g.add_argument("--scenarios", type=int)
    g.add_argument("--nx", type=int)
    g.add_argument("--ny", type=int)
    g.add_argument("--rows", type=int)
    g.add_argument("--density", type=float, default=0.01)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("instance")
    s.add_argument("--method", choices=METHODS, default="pbnb-bm")
    s.add_argument("--trace", help="line-delimited JSON trace output")
    s.add_argument("--no-mu", action="store_true", help="omit multiplier vectors from the trace")
    _add_solver_flags(s)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a suite and print a delimited table")
    b.add_argument("suite", help="low-density, high-density, or a manifest JSON path")
    b.add_argument("--methods", nargs="+", choices=METHODS)
    b.add_argument("--seeds", type=int, default=5)
    b.add_argument("--sizes", nargs="+", choices=sorted(LOW_DENSITY_SIZES))
    b.add_argument("--scenarios", nargs="+", type=int)
    b.add_argument("--p", nargs="+", type=int, dest="p")
    b.add_argument("--time-limit", type=float, default=3600.0)
    b.add_argument("--node-limit", type=int, default=100_000)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--param", action="append", metavar="NAME=VALUE")
    b.add_argument("--results")
    b.add_argument("-o", "--output")
    b.add_argument("--delimiter", default=",")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("compare", help="solve one instance with several methods")
    c.add_argument("instance")
    c.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    c.add_argument("--tol", type=float, default=1e-4, help="allowed UB spread")
    _add_solver_flags(c)
    c.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "p", None) is not None and args.command != "bench":
            check_p(args.p)
        if args.command == "bench" and args.p:
            for p in args.p:
                check_p(p)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (InstanceError, ProgramError) as exc:
        print(f"instance error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"cannot read or write file: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
