import os
import sys

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from oracles import enumerate_binaries
from randmodels import random_feasible_lp, random_milp
from pbnb.instances import tiny_fixture
from pbnb.rnmdt import build_scenario_subproblem
from pbnb.subsolve import (EQ, GE, LE, BuiltIn, External, LinearModel, NonConvexError,
                           QuadraticModel, Status, get_backend, solve_lp, solve_milp, solve_qp)
from pbnb.subsolve.backend import model_from_doc, model_to_doc


def lp(c, rows, senses, rhs, lb, ub, integer=None):
    n = len(c)
    A = sp.csr_matrix(np.array(rows, dtype=float).reshape(len(senses), n))
    return LinearModel(c, A, senses, rhs, lb, ub,
                       np.zeros(n, bool) if integer is None else integer)


def dual_objective(model, res):
    """rhs'y plus the bound terms of the reduced costs d = c - A'y."""
    y = res.duals
    d = model.c - model.A.T @ y
    bound_part = np.where(d > 0, model.lb * d, model.ub * d)
    return float(model.rhs @ y + bound_part.sum())


def test_textbook_lps():
    r = solve_lp(lp([1.0], [[1.0]], [GE], [3.0], [-np.inf], [np.inf]))
    assert r.ok and r.objective == pytest.approx(3.0) and r.x[0] == pytest.approx(3.0)
    r = solve_lp(lp([-1.0, -1.0], [[1.0, 1.0]], [LE], [1.0], [0, 0], [np.inf, np.inf]))
    assert r.ok and r.objective == pytest.approx(-1.0)


def test_infeasible_and_unbounded_lp():
    r = solve_lp(lp([1.0], [[1.0], [1.0]], [LE, GE], [0.0, 1.0], [-np.inf], [np.inf]))
    assert r.status is Status.INFEASIBLE
    r = solve_lp(lp([-1.0], [[1.0]], [GE], [0.0], [0.0], [np.inf]))
    assert r.status is Status.UNBOUNDED


def test_rounding_forced_milp():
    m = lp([-1.0], [[1.0]], [LE], [2.5], [0.0], [3.0], np.array([True]))
    r = solve_milp(m)
    assert r.ok and r.x[0] == 2.0 and r.objective == -2.0


def test_pure_lp_through_milp_matches_lp():
    rng = np.random.default_rng(5)
    for _ in range(10):
        m = random_feasible_lp(rng)
        a, b = solve_lp(m), solve_milp(m)
        assert a.status == b.status
        assert np.array_equal(a.x, b.x) and a.objective == b.objective


def test_tiny_subproblem_lp_relaxation_below_milp():
    sub = build_scenario_subproblem(tiny_fixture(), 0, -2)
    lb, ub = sub.bounds()
    m = sub.model.with_objective(sub.cost()).with_bounds(lb, ub)
    assert solve_lp(m.relaxed()).objective <= solve_milp(m).objective + 1e-9


@pytest.mark.parametrize("s", [0, 1])
def test_tiny_subproblem_matches_enumeration(s):
    prog = tiny_fixture()
    sub = build_scenario_subproblem(prog, s, -2)
    lb, ub = sub.bounds()
    m = sub.model.with_objective(sub.cost()).with_bounds(lb, ub)
    # x is integer in [0, 5]: enumerate it alongside the binaries
    best = np.inf
    for xv in range(6):
        lb2, ub2 = lb.copy(), ub.copy()
        lb2[sub.layout.slices["x"]] = xv
        ub2[sub.layout.slices["x"]] = xv
        fixed = m.with_bounds(lb2, ub2)
        fixed.integer[sub.layout.slices["x"]] = False
        best = min(best, enumerate_binaries(fixed, solve_lp))
    assert solve_milp(m).objective == pytest.approx(best, abs=1e-6)


def test_lp_strong_duality_and_complementarity():
    rng = np.random.default_rng(11)
    for _ in range(30):
        m = random_feasible_lp(rng)
        r = solve_lp(m)
        assert r.ok
        assert abs(r.objective - dual_objective(m, r)) <= 1e-7 * max(1.0, abs(r.objective))
        y = r.duals
        for k, sense in enumerate(m.senses):
            if sense == LE:
                assert y[k] <= 1e-9
            elif sense == GE:
                assert y[k] >= -1e-9
        slack = m.A @ r.x - m.rhs
        assert np.all(np.abs(y * slack) <= 1e-7)
        assert m.max_violation(r.x) <= 1e-9


def test_lp_agrees_with_highs():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = random_feasible_lp(rng)
        A = m.A.toarray()
        ub_rows = [A[k] if s == LE else -A[k] for k, s in enumerate(m.senses) if s != EQ]
        ub_rhs = [m.rhs[k] if s == LE else -m.rhs[k] for k, s in enumerate(m.senses) if s != EQ]
        eq = [k for k, s in enumerate(m.senses) if s == EQ]
        ref = linprog(m.c, A_ub=np.array(ub_rows) if ub_rows else None,
                      b_ub=ub_rhs if ub_rows else None,
                      A_eq=A[eq] if eq else None, b_eq=m.rhs[eq] if eq else None,
                      bounds=list(zip(m.lb, m.ub)), method="highs")
        assert ref.status == 0
        assert solve_lp(m).objective == pytest.approx(ref.fun, abs=1e-7)


def test_milp_matches_enumeration():
    rng = np.random.default_rng(21)
    for _ in range(20):
        m = random_milp(rng, n_bin=int(rng.integers(1, 9)))
        assert abs(solve_milp(m).objective - enumerate_binaries(m, solve_lp)) <= 1e-9


def test_determinism_bit_identical():
    rng = np.random.default_rng(8)
    m = random_milp(rng, n_bin=8, n_cont=2)
    a, b = solve_milp(m), solve_milp(m)
    assert np.array_equal(a.x, b.x) and a.nodes == b.nodes


def test_qp_examples():
    r = solve_qp(QuadraticModel(np.array([[2.0]]), np.array([-2.0]), offset=1.0))
    assert r.ok and r.x[0] == pytest.approx(1.0) and r.objective == pytest.approx(0.0, abs=1e-12)
    # min ||mu||^2 s.t. 0.5 mu1 + 0.5 mu2 = 0  -> 0
    r = solve_qp(QuadraticModel(2 * np.eye(2), np.zeros(2), np.array([[0.5, 0.5]]), [0.0]))
    assert r.ok and np.allclose(r.x, 0.0)
    # master with one flat cut theta <= 5, u = 1, center 0: variables (mu, theta)
    H = np.diag([1.0, 0.0])
    r = solve_qp(QuadraticModel(H, np.array([0.0, -1.0]), None, None,
                                np.array([[0.0, 1.0]]), np.array([5.0])))
    assert r.ok and r.x[0] == pytest.approx(0.0) and -r.objective == pytest.approx(5.0)


def test_qp_rejects_negative_curvature():
    with pytest.raises(NonConvexError):
        solve_qp(QuadraticModel(np.array([[-1.0]]), np.zeros(1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_qp_matches_kkt_reference(seed):
    """Box-and-simplex QPs: compare with the projected-gradient fixed point."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    B = rng.normal(size=(n, n))
    H = B @ B.T + 0.1 * np.eye(n)
    g = rng.normal(size=n)
    r = solve_qp(QuadraticModel(H, g, np.ones((1, n)), [1.0], lb=np.zeros(n)))
    assert r.ok
    x = r.x
    assert abs(x.sum() - 1.0) <= 1e-9 and x.min() >= -1e-9
    # optimality on the simplex: every vertex direction is non-improving
    grad = H @ x + g
    assert np.all(grad - grad @ x >= -1e-7)


def test_linear_model_doc_round_trip():
    rng = np.random.default_rng(2)
    m = random_milp(rng, n_bin=3, n_cont=2)
    m2 = model_from_doc(model_to_doc(m))
    assert np.array_equal(m.c, m2.c) and np.array_equal(m.A.toarray(), m2.A.toarray())
    assert m.senses == m2.senses and np.array_equal(m.integer, m2.integer)


def test_backend_selection(monkeypatch):
    monkeypatch.delenv("PBNB_BACKEND", raising=False)
    assert isinstance(get_backend(), BuiltIn)
    monkeypatch.setenv("PBNB_BACKEND", "external")
    monkeypatch.setenv("PBNB_EXTERNAL_CMD", f"{sys.executable} -m pbnb.subsolve.highs_driver")
    assert isinstance(get_backend(), External)


def test_external_backend_agrees_with_builtin():
    ext = External(f"{sys.executable} -m pbnb.subsolve.highs_driver")
    rng = np.random.default_rng(4)
    for _ in range(5):
        m = random_milp(rng, n_bin=5, n_cont=2)
        a = BuiltIn().solve_milp(m)
        b = ext.solve_milp(m)
        assert b.ok and b.objective == pytest.approx(a.objective, abs=1e-6)
    m = random_feasible_lp(rng)
    assert ext.solve_lp(m).objective == pytest.approx(solve_lp(m).objective, abs=1e-7)
    assert os.environ.get("PBNB_BACKEND", "builtin") == "builtin"
