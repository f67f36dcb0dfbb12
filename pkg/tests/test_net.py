import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from overparam.checks import central_difference, gradient_mismatch, random_instance
from overparam.net import (Topology, WeightVector, evaluate, forward, logistic,
                           network_gradient, param_count, subnetwork_outputs)


def test_logistic_values():
    assert logistic(0.0) == 0.5
    assert logistic(math.log(99)) == pytest.approx(0.99, abs=1e-15)
    assert logistic(1e308) == 1.0
    assert logistic(-1e308) == 0.0


@given(st.floats(min_value=-1e300, max_value=1e300, allow_nan=False))
def test_logistic_symmetry(x):
    assert logistic(x) + logistic(-x) == pytest.approx(1.0, abs=1e-15)


def test_logistic_monotone():
    x = np.linspace(-50, 50, 2001)
    assert np.all(np.diff(logistic(x)) >= 0)


@pytest.mark.parametrize("topo,count", [
    (Topology(1, 2, 2, 3), 33),
    (Topology(1, 2, 2, 1), 11),
])
def test_param_count_examples(topo, count):
    assert param_count(topo) == count
    assert WeightVector.zeros(topo).to_flat().size == count


def test_param_count_linear_in_subnetworks():
    topo = Topology(2, 3, 5, 7)
    assert param_count(topo.with_subnetworks(14)) == 2 * param_count(topo)


@pytest.mark.parametrize("kwargs", [dict(d=0, L=2, r=2, K_n=1), dict(d=1, L=1, r=2, K_n=1),
                                    dict(d=2, L=2, r=3, K_n=1), dict(d=1, L=2, r=2, K_n=0)])
def test_topology_rejects(kwargs):
    with pytest.raises(ValueError):
        Topology(**kwargs)


def test_flat_round_trip_and_indexing():
    rng = np.random.default_rng(0)
    topo = Topology(2, 3, 4, 5)
    flat = rng.normal(size=param_count(topo))
    w = WeightVector.from_flat(topo, flat)
    assert np.array_equal(w.to_flat(), flat)
    w.set(0, 1, 2, 0, 7.0)
    assert w.layer0[1, 2, 0] == 7.0
    w.set(2, 4, 0, 3, -1.0)
    assert w.hidden[4, 1, 0, 3] == -1.0
    w.set(3, 2, 0, 0, 5.0)
    assert w.get(3, 2, 0, 0) == 5.0 and w.outer[2] == 5.0
    with pytest.raises(IndexError):
        w.get(4, 0, 0, 0)


def test_zero_outer_gives_zero_output_and_inner_gradient():
    rng = np.random.default_rng(1)
    topo, w = random_instance(rng)
    w.outer[:] = 0
    x = rng.uniform(-3, 3, size=topo.d)
    value, _ = forward(topo, w, x)
    assert value == 0
    g = network_gradient(topo, w, x)
    assert not np.any(g.layer0) and not np.any(g.hidden)


def test_outer_partial_is_subnetwork_output():
    rng = np.random.default_rng(2)
    topo, w = random_instance(rng)
    x = rng.uniform(-3, 3, size=topo.d)
    _, acts = forward(topo, w, x)
    g = network_gradient(topo, w, x)
    assert np.allclose(g.outer, acts.output[0], rtol=0, atol=1e-15)
    assert np.allclose(subnetwork_outputs(w, x[None])[0], acts.output[0])


def test_forward_matches_direct_recursion():
    """The batched tanh form against a literal per-neuron loop."""
    rng = np.random.default_rng(3)
    for _ in range(20):
        topo, w = random_instance(rng)
        x = rng.uniform(-3, 3, size=topo.d)
        total = 0.0
        for k in range(topo.K_n):
            f = np.array([logistic(w.layer0[k, i, 0] + w.layer0[k, i, 1:] @ x)
                          for i in range(topo.r)])
            for level in range(1, topo.L):
                W = w.hidden[k, level - 1]
                rows = topo.r if level < topo.L - 1 else 1
                f = np.array([logistic(W[i, 0] + W[i, 1:] @ f) for i in range(rows)])
            total += w.outer[k] * f[0]
        value, acts = forward(topo, w, x)
        assert value == pytest.approx(total, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_activation_range_and_output_bound(seed):
    rng = np.random.default_rng(seed)
    topo, w = random_instance(rng, scale=1.0)
    X = rng.uniform(-2, 2, size=(7, topo.d))
    value = evaluate(w, X)
    assert np.all(np.abs(value) <= np.abs(w.outer).sum() + 1e-12)
    _, acts = forward(topo, w, X[0])
    for level in range(1, topo.L + 1):
        a = acts.level(level)
        assert np.all((a > 0) & (a < 1))


def test_saturated_activations_stay_in_closed_unit_interval():
    # pre-activations of order 1e3 round to exactly 0 or 1 in double precision
    rng = np.random.default_rng(9)
    topo, w = random_instance(rng, scale=300.0)
    X = rng.uniform(-5, 5, size=(50, topo.d))
    _, acts = forward(topo, w, X[0])
    for level in range(1, topo.L + 1):
        a = acts.level(level)
        assert np.all((a >= 0) & (a <= 1))
    assert np.all(np.abs(evaluate(w, X)) <= np.abs(w.outer).sum() * (1 + 1e-12))


def test_gradient_matches_finite_differences_small_net():
    rng = np.random.default_rng(4)
    topo = Topology(1, 2, 2, 2)
    w = WeightVector.from_flat(topo, rng.uniform(-3, 3, param_count(topo)))
    x = np.array([0.7])

    def f(v):
        return float(evaluate(WeightVector.from_flat(topo, v, copy=False), x[None])[0])

    ok, rel, _ = gradient_mismatch(network_gradient(topo, w, x).to_flat(),
                                   central_difference(f, w.to_flat()))
    assert ok and rel < 1e-6


def test_dimension_mismatch():
    topo = Topology(2, 2, 4, 1)
    w = WeightVector.zeros(topo)
    with pytest.raises(ValueError):
        forward(topo, w, np.zeros(3))
    with pytest.raises(ValueError):
        network_gradient(topo, w, np.zeros(1))


def test_chunked_evaluation_matches_single_pass():
    rng = np.random.default_rng(5)
    topo = Topology(1, 3, 2, 300)
    w = WeightVector.from_flat(topo, rng.uniform(-1, 1, param_count(topo)))
    X = rng.uniform(-2, 2, size=(20000, 1))
    whole = evaluate(w, X)
    parts = np.concatenate([evaluate(w, X[i:i + 777]) for i in range(0, len(X), 777)])
    assert np.allclose(whole, parts, rtol=0, atol=1e-12)
