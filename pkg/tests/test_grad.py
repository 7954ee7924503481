import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wstl.formula import OPERATOR_WEIGHT, And, Interval, Pred, always, eventually, horizon, params
from wstl.generate import random_formula
from wstl.grad import (AGG, PRED, backward, finite_difference, forward_record, grad_check,
                       relative_error, value_and_grad)
from wstl.semantics import robustness_weighted


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.1, 1.0, 10.0]))
def test_forward_value_bit_identical(seed, sigma):
    rng = np.random.default_rng(seed)
    phi = random_formula(rng, 4, 3, 12)
    s = rng.normal(size=(3, horizon(phi) + 1))
    for k in (0, 1):
        value, _ = forward_record(s, phi, k, sigma)
        assert value == robustness_weighted(s, phi, k, sigma)


def test_pred_only_tape():
    _, tape = forward_record([3.0], Pred([1.0], 2.0))
    assert len(tape) == 1 and tape.count(PRED) == 1


def test_nested_temporal_tape_shares_predicate_nodes():
    phi = eventually(1, 2, always(0, 3, Pred([1.0], 0.0)))
    _, tape = forward_record(np.zeros((1, horizon(phi))), phi)
    # predicate evaluations are shared across the two Always windows: times 1..5
    assert tape.count(PRED) == 5
    assert tape.count(AGG) == 3
    for i, node in enumerate(tape.nodes):
        assert all(j < i for j in node.inputs)


def test_pred_gradient():
    _, g = value_and_grad([3.0], Pred([1.0], 0.5))
    assert list(g) == [-3.0, 1.0]


def test_equal_value_aggregate_gradient():
    phi = And(Pred([0.0], 5.0), Pred([0.0], 5.0), weights=[1, 1])
    _, g = value_and_grad([0.0], phi)
    view = params(phi)
    offsets = [i for i in range(len(view)) if view[i].kind == "predicate-offset"]
    assert g[offsets] == pytest.approx([0.5, 0.5], abs=1e-15)
    assert g[offsets] == pytest.approx(finite_difference([0.0], phi)[offsets], abs=1e-9)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.1, 1.0, 10.0]))
def test_gradient_matches_finite_differences(seed, sigma):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 6))
    phi = random_formula(rng, int(rng.integers(1, 5)), dim, 12)
    s = rng.normal(size=(dim, int(rng.integers(horizon(phi), 13))))
    _, g = value_and_grad(s, phi, 0, sigma)
    fd = finite_difference(s, phi, 0, sigma)
    assert relative_error(g, fd).max() <= 1e-5


def test_grad_check_random_depth3():
    rng = np.random.default_rng(5)
    for _ in range(10):
        rep = grad_check(random_formula(rng, 3, 2, 8), trials=10, tolerance=1e-4, seed=int(rng.integers(1e9)))
        assert rep.passed, str(rep)


def test_grad_check_sharp_sigma():
    rng = np.random.default_rng(6)
    for _ in range(10):
        rep = grad_check(random_formula(rng, 3, 2, 8), trials=5, tolerance=1e-3, sigma=1e-2,
                         seed=int(rng.integers(1e9)))
        assert rep.passed, str(rep)


def test_grad_check_reports_failures():
    phi = always(0, 2, Pred([1.0], 0.0))
    rep = grad_check(phi, trials=3, tolerance=-1.0)
    assert not rep.passed and rep.failures and "FAIL" in str(rep)


def test_zero_sparsified_weight_blocks_gradient():
    inner = [Pred([1.0], 0.0) for _ in range(3)]
    phi = And(always(0, 0, inner[0]), And(inner[1], inner[2], weights=[0.0, 1.0]), weights=[1.0, 1.0])
    phi.right.sparsified = True
    _, g = value_and_grad([0.7], phi)
    view = params(phi)
    dead = [i for i in range(len(view)) if view[i].node is inner[1]]
    assert np.all(g[dead] == 0)


def test_weight_scaling_direction_is_flat(rng):
    for _ in range(50):
        phi = random_formula(rng, 3, 2, 8)
        s = rng.normal(size=(2, horizon(phi)))
        _, g = value_and_grad(s, phi, 0, 1.0)
        view = params(phi)
        for ref_start in set(view.offsets.values()):
            node = view[ref_start].node
            if view[ref_start].kind != OPERATOR_WEIGHT:
                continue
            m = len(node.weights)
            # directional derivative along w itself (uniform scaling) vanishes
            assert abs(float(np.dot(g[ref_start:ref_start + m], node.weights))) <= 1e-10


def test_backward_batch_sums(rng):
    phi = random_formula(rng, 3, 2, 8)
    X = rng.normal(size=(4, 2, horizon(phi)))
    seed = rng.normal(size=4)
    _, tape = forward_record(X, phi)
    total = backward(tape, seed)
    parts = sum(c * value_and_grad(X[i], phi)[1] for i, c in enumerate(seed))
    assert total == pytest.approx(parts, rel=1e-12, abs=1e-12)


def test_gate_gradient_is_straight_through():
    phi = always(0, 2, Pred([1.0], 0.0), weights=[1.0, 2.0, 3.0])
    phi.gates = np.array([0.9, 0.8, 0.7])
    phi.gate_sample = np.array([1.0, 1.0, 1.0])
    s = np.array([[0.3, -0.2, 0.5]])
    _, g = value_and_grad(s, phi)
    view = params(phi)
    w_idx = [i for i in range(len(view)) if view[i].kind == OPERATOR_WEIGHT]
    g_idx = [i for i in range(len(view)) if view[i].kind == "gate"]
    # d/dg through w*g_s with g_s treated as identity: dL/dw_eff * w
    assert g[g_idx] == pytest.approx(g[w_idx] * phi.weights, rel=1e-12)


def test_interval_offsets_in_tape():
    phi = always(2, 3, Pred([1.0], 0.0))
    s = np.array([[9.0, 9.0, 1.0, 2.0]])
    v, _ = forward_record(s, phi)
    assert v == robustness_weighted(s, phi)
    assert phi.interval == Interval(2, 3)
