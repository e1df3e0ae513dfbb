import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbnb.instances import (GeneratorConfig, InstanceError, ResultRecord, append_result, dumps,
                            generate, loads, micro_instance, read_instance, read_results,
                            tiny_fixture, write_instance)
from pbnb.model import validate


def assert_same_program(a, b):
    assert np.array_equal(a.c, b.c) and np.array_equal(a.x_lb, b.x_lb)
    assert np.array_equal(a.x_ub, b.x_ub) and np.array_equal(a.x_integer, b.x_integer)
    assert np.array_equal(a.probabilities, b.probabilities)
    assert a.n_scenarios == b.n_scenarios
    for s1, s2 in zip(a.scenarios, b.scenarios):
        assert np.array_equal(s1.q, s2.q) and s1.Q_terms == s2.Q_terms
        assert np.array_equal(s1.y_lb, s2.y_lb) and np.array_equal(s1.y_ub, s2.y_ub)
        assert np.array_equal(s1.y_integer, s2.y_integer)
        for c1, c2 in zip(s1.constraints, s2.constraints):
            assert np.array_equal(c1.T_row, c2.T_row) and np.array_equal(c1.W_row, c2.W_row)
            assert c1.U_terms == c2.U_terms and c1.rhs == c2.rhs and c1.sense == c2.sense


def test_tiny_round_trip(tmp_path):
    path = tmp_path / "tiny.json"
    write_instance(tiny_fixture(), path)
    assert_same_program(read_instance(path), tiny_fixture())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.01, 0.3, 0.9]))
def test_generated_round_trip_exact(seed, density):
    prog = generate(GeneratorConfig(3, 3, 4, 3, density, seed))
    assert_same_program(loads(dumps(prog)), prog)


def test_same_seed_same_bytes():
    cfg = GeneratorConfig(4, 3, 5, 3, 0.5, 17)
    assert dumps(generate(cfg)) == dumps(generate(cfg))
    assert dumps(generate(cfg)) != dumps(generate(GeneratorConfig(4, 3, 5, 3, 0.5, 18)))


def test_size_class_variable_count():
    cfg = GeneratorConfig.size_class("S", 50)
    assert (cfg.n_x, cfg.n_y, cfg.n_rows) == (100, 100, 100)
    prog = generate(cfg)
    assert prog.total_variables() == 5100


def test_low_density_pattern_count():
    prog = generate(GeneratorConfig.size_class("S", 2, density=0.01, seed=3))
    for sc in prog.scenarios:
        assert 80 <= len(sc.Q_terms) <= 120
        for con in sc.constraints:
            assert 80 <= len(con.U_terms) <= 120
        assert all(i <= j for i, j, _ in sc.Q_terms)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_generated_instances_valid_and_feasible(seed, nx, ny, rows):
    prog = generate(GeneratorConfig(2, nx, ny, rows, 0.5, seed))
    assert validate(prog).ok
    gen = prog.meta["generator"]
    for s, sc in enumerate(prog.scenarios):
        x0 = np.array(gen["feasible_point"][s]["x"])
        y0 = np.array(gen["feasible_point"][s]["y"])
        assert np.all(x0 == np.round(x0)) and np.all((0 <= x0) & (x0 <= 10))
        assert np.all((-5 <= y0) & (y0 <= 5))
        for con in sc.constraints:
            assert con.residual(x0, y0) == 0.0 or con.residual(x0, y0) <= 1e-9


def test_generator_meta_written_to_file():
    doc = json.loads(dumps(generate(GeneratorConfig(2, 2, 2, 2, 0.5, 1))))
    assert doc["format"] == "pbnb-instance" and doc["version"] == 1
    assert doc["generator"]["seed"] == 1


def test_bad_probabilities_surface_on_read(tmp_path):
    doc = json.loads(dumps(tiny_fixture()))
    doc["probabilities"] = [0.7, 0.2]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(InstanceError, match="probabilities sum to 0.9"):
        read_instance(path)


def test_truncated_file_is_parse_error(tmp_path):
    text = dumps(micro_instance(0))
    path = tmp_path / "cut.json"
    path.write_text(text[: len(text) // 2])
    with pytest.raises(InstanceError, match="parse error at line"):
        read_instance(path)


def test_unknown_field_rejected():
    doc = json.loads(dumps(tiny_fixture()))
    doc["scenarios"][0]["colour"] = "blue"
    with pytest.raises(InstanceError, match="scenarios"):
        loads(json.dumps(doc))


def test_result_records_round_trip(tmp_path):
    path = tmp_path / "res.jsonl"
    rec = ResultRecord("tiny", "pbnb-bm", -2, -1.0, -1.0, 0.0, 3, 11, 0.1, "optimal")
    append_result(rec, path)
    append_result(ResultRecord("x", "monolith", -1, float("inf"), float("inf"), float("nan"),
                               0, 0, 0.0, "infeasible"), path)
    back = read_results(path)
    assert back[0] == rec
    assert back[1].z_ub is None and back[1].gap is None
