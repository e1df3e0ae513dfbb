"""Reference external solver: answers one exchange file with scipy's HiGHS.

    python3 -m pbnb.subsolve.highs_driver model.json result.json
"""

from __future__ import annotations

import json
import sys

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .backend import model_from_doc
from .model import EQ, GE, LE


def solve_doc(doc: dict) -> dict:
    m = model_from_doc(doc)
    sign = -1.0 if m.maximize else 1.0
    A = m.A.toarray()
    if doc.get("want_duals") and not m.integer.any():
        ub_rows = [k for k, s in enumerate(m.senses) if s != EQ]
        flip = np.array([1.0 if m.senses[k] == LE else -1.0 for k in ub_rows])
        eq_rows = [k for k, s in enumerate(m.senses) if s == EQ]
        res = linprog(sign * m.c,
                      A_ub=A[ub_rows] * flip[:, None] if ub_rows else None,
                      b_ub=m.rhs[ub_rows] * flip if ub_rows else None,
                      A_eq=A[eq_rows] if eq_rows else None, b_eq=m.rhs[eq_rows] if eq_rows else None,
                      bounds=list(zip(m.lb, m.ub)), method="highs")
        out = {"status": {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "iteration-limit")}
        if res.status == 0:
            duals = np.zeros(m.n_rows)
            if ub_rows:
                duals[ub_rows] = sign * res.ineqlin.marginals * flip
            if eq_rows:
                duals[eq_rows] = sign * res.eqlin.marginals
            obj = float(m.c @ res.x) + m.offset
            out.update(objective=obj, bound=obj, x=res.x.tolist(), duals=duals.tolist())
        return out
    lo = np.where(np.array(m.senses) == LE, -np.inf, m.rhs)
    hi = np.where(np.array(m.senses) == GE, np.inf, m.rhs)
    cons = [LinearConstraint(A, lo, hi)] if m.n_rows else []
    res = milp(sign * m.c, constraints=cons, integrality=m.integer.astype(int),
               bounds=Bounds(m.lb, m.ub),
               options={"mip_rel_gap": doc.get("gap_tol", 1e-9), "node_limit": doc.get("node_limit")})
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "iteration-limit")
    out = {"status": status}
    if res.x is not None:
        obj = float(m.c @ res.x) + m.offset
        bound = getattr(res, "mip_dual_bound", None)
        out.update(objective=obj, x=res.x.tolist(),
                   bound=obj if bound is None else sign * float(bound) + m.offset)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: highs_driver MODEL.json RESULT.json", file=sys.stderr)
        return 2
    with open(argv[0]) as fh:
        doc = json.load(fh)
    with open(argv[1], "w") as fh:
        json.dump(solve_doc(doc), fh)
    return 0


if __name__ == "__main__":
    sys.exit(main())
