import numpy as np
import pytest

from pbnb.fwph import (FwphParams, ScenarioSdm, VertexSet, augmented_lagrangian,
                       initialize_vertex_sets, run_fwph)
from pbnb.instances import micro_instance, tiny_fixture
from pbnb.lagrangian import DualEvaluator, dual_residual
from pbnb.model import StochasticProgram
from pbnb.rnmdt import solve_monolith
from pbnb.trace import Trace


def single(prog, s=0):
    return StochasticProgram(prog.c, prog.x_lb, prog.x_ub, prog.x_integer,
                             [prog.scenarios[s]], [1.0])


def twins(prog, s=0, k=2):
    return StochasticProgram(prog.c, prog.x_lb, prog.x_ub, prog.x_integer,
                             [prog.scenarios[s]] * k, [1.0 / k] * k)


COST = (np.array([2.0]), np.array([1.0, -1.0]), np.array([0.5]))


def test_al_reduces_to_objective_on_consensus():
    x, y, w = np.array([1.0]), np.array([0.5, 2.0]), np.array([3.0])
    plain = 2.0 + 0.5 - 2.0 + 1.5
    assert augmented_lagrangian(COST, x, y, w, x, np.array([7.0]), 2.0) == pytest.approx(plain)


def test_al_without_penalty_is_lagrangian():
    x, y, w = np.array([1.0]), np.array([0.5, 2.0]), np.array([3.0])
    xb, mu = np.array([0.25]), np.array([0.3])
    plain = 2.0 + 0.5 - 2.0 + 1.5
    assert augmented_lagrangian(COST, x, y, w, xb, mu, 0.0) == pytest.approx(plain + 0.3 * 0.75)


def test_al_tiny_arithmetic():
    # x - x_bar = 1, mu = 0.3, tau = 2: plain + 0.3 + 1.0
    x, y, w = np.array([2.0]), np.array([0.5, 2.0]), np.array([3.0])
    plain = 4.0 + 0.5 - 2.0 + 1.5
    val = augmented_lagrangian(COST, x, y, w, np.array([1.0]), np.array([0.3]), 2.0)
    assert val == pytest.approx(plain + 0.3 + 1.0)


def test_vertex_dedup():
    ev = DualEvaluator(tiny_fixture(), -2)
    sol = ev.oracles[0].lagrangian(np.zeros(1))
    V = VertexSet(ev.oracles[0].sub)
    assert V.add(sol.vector) and not V.add(sol.vector.copy())
    assert len(V) == 1


def test_sdm_fixed_point():
    prog = tiny_fixture()
    ev = DualEvaluator(prog, -2)
    sdm = ScenarioSdm(ev.oracles[0], prog.c, 2.0)
    sol = ev.oracles[0].lagrangian(np.zeros(1))
    sdm.V.add(sol.vector)
    start = np.concatenate([sol.x, sol.y, sol.w])
    out = sdm.run(start, sol.x.copy(), np.zeros(1), 1, 1e-6, None, None, start_in_hull=True)
    assert out.gaps[0] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(out.x, sol.x) and np.allclose(out.y, sol.y) and np.allclose(out.w, sol.w)
    assert len(sdm.V) == 1


@pytest.mark.parametrize("s", [0, 1])
def test_sdm_without_penalty_matches_lagrangian(s):
    prog = micro_instance(4)
    ev = DualEvaluator(prog, -2)
    mu = np.array([0.7, -0.4][: prog.n_x] + [0.0] * max(0, prog.n_x - 2))
    sdm = ScenarioSdm(ev.oracles[s], prog.c, 0.0)
    seed = ev.oracles[s].lagrangian(np.zeros(prog.n_x))
    sdm.V.add(seed.vector)
    start = np.concatenate([seed.x, seed.y, seed.w])
    x_bar = seed.x.copy()
    out = sdm.run(start, x_bar, mu, 1, 1e-6, None, None)
    ref = ev.oracles[s].lagrangian(mu)
    assert out.lagrangian == pytest.approx(ref.value, abs=1e-8)
    # minimum over conv(V) of the (now linear) Lagrangian reaches the same value
    assert out.al_values[-1] + float(mu @ x_bar) == pytest.approx(ref.value, abs=1e-8)


def test_shifted_multiplier_at_first_inner_step():
    prog = tiny_fixture()
    ev = DualEvaluator(prog, -2)
    sdm = ScenarioSdm(ev.oracles[1], prog.c, 2.0)
    sol = ev.oracles[1].lagrangian(np.zeros(1))
    sdm.V.add(sol.vector)
    start = np.concatenate([sol.x, sol.y, sol.w])
    mu, xb = np.array([0.4]), np.array([1.5])
    out = sdm.run(start, xb, mu, 1, 1e-6, None, None)
    assert np.allclose(out.mu_hat, mu + 2.0 * (sol.x - xb))


def test_single_scenario_terminates_at_first_iteration():
    res = run_fwph(DualEvaluator(single(micro_instance(0)), -2))
    assert res.iterations == 1 and res.converged and res.residuals == [0.0]


@pytest.mark.parametrize("seed", range(3))
def test_identical_scenarios_terminate_at_first_iteration(seed):
    res = run_fwph(DualEvaluator(twins(micro_instance(seed)), -2))
    assert res.iterations == 1 and res.converged and res.residuals == [0.0]


def test_seeding_single_and_twin():
    sdms, _, _ = initialize_vertex_sets(DualEvaluator(single(micro_instance(2)), -2), np.zeros((1, 2)))
    assert len(sdms[0].V) == 1
    prog = twins(micro_instance(2))
    sdms, _, _ = initialize_vertex_sets(DualEvaluator(prog, -2), np.zeros((2, prog.n_x)))
    assert len(sdms[1].V) == 1


def test_tiny_seed_vertices_are_feasible():
    prog = tiny_fixture()
    ev = DualEvaluator(prog, -2)
    with pytest.warns(RuntimeWarning, match="recourse infeasible"):
        sdms, _, notes = initialize_vertex_sets(ev, np.zeros((2, 1)))
    assert notes
    for s, sdm in enumerate(sdms):
        m = ev.oracles[s].sub.model
        for v in sdm.V.full:
            assert m.max_violation(v) <= 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_run_invariants(seed):
    prog = micro_instance(seed)
    opt = solve_monolith(prog, -2).objective
    tr = Trace()
    res = run_fwph(DualEvaluator(prog, -2), trace=tr)
    for rec in tr.of_kind("fwph"):
        assert rec["dual_residual"] <= 1e-8
        assert rec["value"] <= opt + 1e-6
    for h in res.history:
        for seq in h["al_values"]:
            assert all(b <= a + 1e-9 for a, b in zip(seq, seq[1:]))
    assert dual_residual(res.mu, prog.probabilities) <= 1e-8
    assert np.all(res.evaluation.x >= prog.x_lb - 1e-9) and np.all(res.evaluation.x <= prog.x_ub + 1e-9)


def test_longer_inner_loop_keeps_monotone_values():
    prog = micro_instance(2)
    res = run_fwph(DualEvaluator(prog, -2), params=FwphParams(t_max=4, k_max=30))
    for h in res.history:
        for seq in h["al_values"]:
            assert all(b <= a + 1e-9 for a, b in zip(seq, seq[1:]))


def test_params_validation():
    with pytest.raises(ValueError):
        FwphParams(alpha=1.5)
    with pytest.raises(ValueError):
        FwphParams(t_max=0)
