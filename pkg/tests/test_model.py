import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exact_one_y, grid_one_y
from pbnb.instances import micro_instance, tiny_fixture
from pbnb.lagrangian import evaluate_dual
from pbnb.model import (EQ, CandidateSolution, ProgramError, Scenario, ScenarioConstraint,
                        StochasticProgram, evaluate_primal, permuted, require_valid, validate)


def two_scenario(probs, rhs=(1.0, 1.0)):
    scs = [Scenario([1.0], [(0, 0, 1.0)], [ScenarioConstraint([1.0], [1.0], [], h)], [0.0], [2.0])
           for h in rhs]
    return StochasticProgram([1.0], [0.0], [1.0], [False], scs, probs)


def test_valid_probabilities_give_empty_report():
    rep = validate(two_scenario([0.5, 0.5]))
    assert rep.ok and rep.errors == []


def test_probabilities_not_summing_to_one_are_reported():
    rep = validate(two_scenario([0.7, 0.2]))
    assert not rep.ok
    assert "probabilities sum to 0.9" in rep.errors
    with pytest.raises(ProgramError):
        require_valid(two_scenario([0.7, 0.2]))


def test_tiny_fixture_is_valid():
    assert validate(tiny_fixture()).ok


def test_unbounded_bilinear_variable_rejected():
    sc = Scenario([0.0], [(0, 0, 1.0)], [], [0.0], [np.inf])
    prog = StochasticProgram([0.0], [0.0], [1.0], [False], [sc], [1.0])
    assert any("finite bounds" in e for e in validate(prog).errors)


def test_bad_term_index_reported():
    sc = Scenario([0.0], [(0, 3, 1.0)], [], [0.0], [1.0])
    prog = StochasticProgram([0.0], [0.0], [1.0], [False], [sc], [1.0])
    assert not validate(prog).ok


def test_single_scenario_has_no_nac_violation():
    sc = Scenario([1.0], [], [ScenarioConstraint([1.0], [1.0], [], 1.0)], [0.0], [2.0])
    prog = StochasticProgram([1.0], [0.0], [1.0], [False], [sc], [1.0])
    ev = evaluate_primal(prog, CandidateSolution([0.3], [[0.3]], [[0.7]]))
    assert ev.nac_violation == 0.0
    assert ev.max_violation == pytest.approx(0.0, abs=1e-15)
    assert ev.objective == pytest.approx(1.0)


def test_zero_solution_on_homogeneous_rows():
    prog = two_scenario([0.5, 0.5], rhs=(0.0, 0.0))
    ev = evaluate_primal(prog, CandidateSolution([0.0], [[0.0], [0.0]], [[0.0], [0.0]]))
    assert ev.max_violation == 0.0 and ev.feasible


def test_dimension_mismatch_raises():
    prog = two_scenario([0.5, 0.5])
    with pytest.raises(ValueError):
        evaluate_primal(prog, CandidateSolution([0.0], [[0.0]], [[0.0]]))


def test_tiny_oracle_point_evaluates_to_grid_optimum():
    prog = tiny_fixture()
    value, x, ys, worst = grid_one_y(prog, step=1e-4)
    sol = CandidateSolution(x, [x, x], [[ys[0]], [ys[1]]])
    ev = evaluate_primal(prog, sol)
    assert ev.objective == pytest.approx(value, abs=1e-6)
    assert ev.max_violation <= 1e-4
    assert ev.nac_violation == 0.0


def test_exact_and_grid_oracles_agree_on_tiny():
    exact = exact_one_y(tiny_fixture())
    grid = grid_one_y(tiny_fixture(), step=1e-4)
    assert exact[0] == pytest.approx(grid[0], abs=1e-6)
    assert exact[0] == pytest.approx(-1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 50), st.permutations([0, 1, 2, 3]), st.floats(-3, 3), st.floats(-2, 2))
def test_evaluate_primal_permutation_invariant(seed, perm, xv, yv):
    prog = micro_instance(seed)
    S = prog.n_scenarios
    order = [k for k in perm if k < S]
    x = np.full(prog.n_x, xv)
    rng = np.random.default_rng(seed)
    ys = [rng.uniform(-2, 2, 3) for _ in range(S)]
    xs = [x + rng.normal(0, 0.1, prog.n_x) for _ in range(S)]
    a = evaluate_primal(prog, CandidateSolution(x, xs, ys))
    b = evaluate_primal(permuted(prog, order),
                        CandidateSolution(x, [xs[k] for k in order], [ys[k] for k in order]))
    assert b.objective == pytest.approx(a.objective, rel=1e-12, abs=1e-12)
    assert b.max_violation == pytest.approx(a.max_violation, rel=1e-12, abs=1e-12)
    assert b.nac_violation == pytest.approx(a.nac_violation, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("p", [-1, -2])
@pytest.mark.parametrize("mu_scale", [0.0, 0.5, 3.0])
def test_feasible_point_objective_above_dual_bound(p, mu_scale):
    prog = tiny_fixture()
    value, x, ys = exact_one_y(prog)
    mu = np.array([[mu_scale], [-mu_scale]])
    assert evaluate_dual(prog, p, mu).value <= value + 1e-6


def test_constraint_senses():
    le = ScenarioConstraint([1.0], [1.0], [], 1.0, "<=")
    ge = ScenarioConstraint([1.0], [1.0], [], 1.0, ">=")
    assert le.residual([1.0], [1.0]) == 1.0 and le.residual([0.0], [0.5]) == 0.0
    assert ge.residual([0.0], [0.5]) == 0.5 and ge.residual([1.0], [1.0]) == 0.0
    assert ScenarioConstraint([1.0], [0.0], [(0, 0, 2.0)], 0.0, EQ).activity([1.0], [3.0]) == 19.0
