import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from overparam.checks import central_difference, gradient_mismatch, random_instance
from overparam.estimator import (OverparamRegressor, TrainingDiverged, empirical_risk, in_cube,
                                 init_weights, predict, risk_gradient, schedule, train, truncate,
                                 validate_theorem_conditions)
from overparam.net import Topology, WeightVector, _forward_batch, evaluate, subnetwork_outputs

E = math.e
T1 = Topology(1, 2, 2, 4)


def test_schedule_examples():
    hp = schedule(E, T1, c4=1.0, L_n=1000.0)
    assert hp.step_size == pytest.approx(0.001)
    assert hp.t_n == 1000
    hp = schedule(E ** 2, T1, c1=1.0, c3=1.0, L_n=10.0)
    assert hp.alpha_n == pytest.approx(2.0) and hp.beta_n == pytest.approx(2.0)
    hp = schedule(E, T1, L_n=None)
    assert hp.theory_mode and hp.L_n == pytest.approx(8.0)


def test_schedule_invariants():
    hp = schedule(137, Topology(2, 3, 4, 9), c4=0.7, L_n=321.0)
    assert hp.step_size * hp.L_n == pytest.approx(1.0)
    assert hp.t_n >= hp.c4 * hp.L_n * hp.log_n
    assert hp.tau == pytest.approx(0.4 / 3)


@pytest.mark.parametrize("kwargs", [dict(n=1), dict(n=10, c2=0.0), dict(n=10, c1=-1.0),
                                    dict(n=10, tau=0.5), dict(n=10, tau=0.0)])
def test_schedule_rejects(kwargs):
    n = kwargs.pop("n")
    with pytest.raises(ValueError):
        schedule(n, T1, **kwargs)


def test_conditions_examples():
    rep = validate_theorem_conditions(Topology(1, 2, 2, 10 ** 4), schedule(100, T1, L_n=1e3))
    c = rep["th1eq2"]
    assert c.satisfied is False and c.rhs == pytest.approx(100 ** 2 * math.log(100))
    rep = validate_theorem_conditions(Topology(1, 2, 2, 100), schedule(3, T1, L_n=1e3))
    assert rep["th1eq2"].satisfied is True and rep["th1eq2"].rhs == pytest.approx(9 * math.log(3))
    names = [c.name for c in rep.conditions]
    assert names == ["th1eq1", "th1eq2", "th1eq4", "tau", "width", "depth"]
    assert rep["th1eq1"].satisfied is None


def test_tau_boundary_is_reported_not_raised():
    # schedule refuses tau = 1/(d+1); a hand-built Hyperparams is still reported
    hp = schedule(50, T1, L_n=1e3)
    from dataclasses import replace
    rep = validate_theorem_conditions(T1, replace(hp, tau=0.5))
    assert rep["tau"].satisfied is False


def test_conditions_with_kappa():
    hp = schedule(100, T1, L_n=1e3)
    assert validate_theorem_conditions(T1, hp, kappa=1.0)["th1eq1"].satisfied is True
    assert validate_theorem_conditions(T1.with_subnetworks(1000), hp,
                                       kappa=1.0)["th1eq1"].satisfied is False


def test_init_weights_ranges_and_determinism():
    topo = Topology(1, 3, 2, 200)
    hp = schedule(100, topo, L_n=1e3)
    w = init_weights(topo, hp, 3)
    assert np.max(np.abs(w.outer)) == 0
    hidden_range = 20 * math.log(100) ** 2
    assert hidden_range == pytest.approx(424.2, abs=0.05)
    assert np.max(np.abs(w.hidden)) <= hidden_range
    assert np.max(np.abs(w.hidden)) > 0.9 * hidden_range
    assert np.max(np.abs(w.layer0)) <= 100 ** hp.tau
    again = init_weights(topo, hp, 3)
    assert np.array_equal(w.to_flat(), again.to_flat())
    other = init_weights(topo, hp, 4)
    assert not np.array_equal(w.hidden, other.hidden)


def test_empirical_risk_examples():
    topo = Topology(1, 2, 2, 3)
    hp = schedule(10, topo, L_n=1e3)
    w = WeightVector.zeros(topo)
    assert empirical_risk(w, [[0.0]], [2.0], hp) == 4.0
    X = np.array([[0.5], [-1.0], [100.0]])
    y = np.array([1.0, 2.0, 3.0])
    assert empirical_risk(w, X, y, hp) == pytest.approx((1 + 4) / 3)
    assert empirical_risk(w, [[50.0], [-60.0]], [1.0, 1.0], hp) == 0.0


def test_risk_includes_ridge_term():
    rng = np.random.default_rng(0)
    topo = Topology(1, 2, 2, 3)
    hp = schedule(10, topo, c2=0.3, L_n=1e3)
    w = init_weights(topo, hp, rng)
    w.outer[:] = [1.0, -2.0, 0.5]
    X = rng.uniform(-1, 1, size=(5, 1))
    y = rng.normal(size=5)
    direct = np.mean((evaluate(w, X) - y) ** 2) + 0.3 * np.sum(w.outer ** 2)
    assert empirical_risk(w, X, y, hp) == pytest.approx(direct, rel=1e-14)


def test_gradient_at_init():
    rng = np.random.default_rng(1)
    topo = Topology(1, 2, 2, 3)
    hp = schedule(10, topo, L_n=1e3)
    w = init_weights(topo, hp, rng)
    X = np.array([[0.3], [-0.8]])
    y = np.array([1.5, -0.5])
    g = risk_gradient(w, X, y, hp)
    assert not np.any(g.layer0) and not np.any(g.hidden)
    B = subnetwork_outputs(w, X)
    expected = (2 / 2) * ((0 - y) @ B)
    assert np.allclose(g.outer, expected, rtol=1e-14, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_risk_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    topo, w = random_instance(rng, d_max=2, K_max=4)
    X = rng.uniform(-2.5, 2.5, size=(5, topo.d))
    y = rng.normal(size=5)
    hp = schedule(5, topo, c2=0.2, L_n=1e3)

    def F(v):
        return empirical_risk(WeightVector.from_flat(topo, v, copy=False), X, y, hp)

    ok, rel, _ = gradient_mismatch(risk_gradient(w, X, y, hp).to_flat(),
                                   central_difference(F, w.to_flat()))
    assert ok, rel


def test_train_zero_steps_returns_init():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, size=(10, 1))
    y = np.sin(X[:, 0])
    hp = schedule(10, T1, L_n=1e3)
    w, trace = train(X, y, T1, hp, 5, n_steps=0)
    assert np.array_equal(w.to_flat(), trace.initial.to_flat())
    assert len(trace) == 1


def test_train_zero_response_stays_zero():
    X = np.linspace(-1, 1, 12)[:, None]
    hp = schedule(12, T1, L_n=100.0)
    w, trace = train(X, np.zeros(12), T1, hp, 0)
    assert len(trace) == hp.t_n + 1
    assert not np.any(w.outer)
    assert np.all(trace.risk == 0)


def test_train_risk_non_increasing_desk_mode():
    rng = np.random.default_rng(3)
    topo = Topology(1, 2, 2, 64)
    X = rng.uniform(-2, 2, size=(20, 1))
    y = np.sin(2 * X[:, 0])
    hp = schedule(20, topo, L_n=1e3)
    _, trace = train(X, y, topo, hp, rng)
    assert len(trace) == hp.t_n + 1
    assert np.all(np.diff(trace.risk) <= 0)
    assert np.all(np.isfinite(trace.risk)) and np.all(np.isfinite(trace.grad_norm))


def test_update_exactness_on_stored_iterates():
    rng = np.random.default_rng(4)
    topo = Topology(1, 2, 2, 8)
    X = rng.uniform(-2, 2, size=(15, 1))
    y = np.cos(X[:, 0])
    hp = schedule(15, topo, L_n=500.0)
    _, trace = train(X, y, topo, hp, rng, n_steps=40, store_iterates=True)
    for t in range(40):
        w_t = WeightVector.from_flat(topo, trace.iterates[t])
        g = risk_gradient(w_t, X, y, hp).to_flat()
        step = trace.iterates[t + 1] - trace.iterates[t]
        assert np.allclose(step, -hp.step_size * g, rtol=0,
                           atol=4 * np.finfo(float).eps * np.abs(trace.iterates[t]).max())


def test_training_is_bit_reproducible():
    rng = np.random.default_rng(5)
    X = rng.uniform(-2, 2, size=(12, 1))
    y = X[:, 0] ** 2
    hp = schedule(12, T1, L_n=300.0)
    _, a = train(X, y, T1, hp, 11)
    _, b = train(X, y, T1, hp, 11)
    for name in ("risk", "grad_norm", "drift", "step_length"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


@pytest.mark.parametrize("outer_only", [False, True])
def test_saturation_cache_matches_dense_route(monkeypatch, outer_only):
    import overparam.estimator as est
    rng = np.random.default_rng(8)
    topo = Topology(1, 2, 2, 64)
    X = rng.uniform(-2, 2, size=(60, 1))
    y = np.sin(2 * X[:, 0]) + 0.2 * rng.standard_normal(60)
    hp = schedule(60, topo, L_n=1000.0)
    w0 = init_weights(topo, hp, 3)
    w_fast, fast = train(X, y, topo, hp, init=w0, n_steps=60, outer_only=outer_only)
    monkeypatch.setattr(est, "_CACHE_ENTRIES", 0)
    w_dense, dense = train(X, y, topo, hp, init=w0, n_steps=60, outer_only=outer_only)
    assert np.allclose(fast.risk, dense.risk, rtol=1e-12, atol=1e-14)
    assert np.allclose(w_fast.to_flat(), w_dense.to_flat(), rtol=1e-10, atol=1e-14)


def test_saturated_subnetworks_keep_inner_weights():
    rng = np.random.default_rng(9)
    topo = Topology(1, 2, 2, 64)
    X = rng.uniform(-2, 2, size=(40, 1))
    y = np.cos(X[:, 0])
    hp = schedule(40, topo, L_n=1000.0)
    w0 = init_weights(topo, hp, 4)
    w, _ = train(X, y, topo, hp, init=w0, n_steps=30)
    inside = X[in_cube(X, hp.alpha_n)]
    # tanh form of the output neuron: exactly +-1 means sigma'(z) is exactly zero
    t = _forward_batch(w0, inside).output_t
    saturated = np.all(np.abs(t) == 1.0, axis=1)
    assert saturated.any() and not saturated.all()
    assert np.array_equal(w.layer0[saturated], w0.layer0[saturated])
    assert np.array_equal(w.hidden[saturated], w0.hidden[saturated])
    assert not np.array_equal(w.outer[saturated], w0.outer[saturated])


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_train_aborts_on_non_finite():
    topo = Topology(1, 2, 2, 2)
    X = np.array([[0.1], [0.2]])
    y = np.array([1e200, -1e200])
    hp = schedule(2, topo, L_n=1.0)
    with pytest.raises(TrainingDiverged) as info:
        train(X, y, topo, hp, 0, n_steps=20)
    assert info.value.step >= 0


def test_truncate_examples():
    assert truncate(3.0, 2.0) == 2.0
    assert truncate(-5.0, 2.0) == -2.0
    assert truncate(1.0, 2.0) == 1.0
    with pytest.raises(ValueError):
        truncate(1.0, 0.0)


def test_predict_support_and_bound():
    rng = np.random.default_rng(6)
    topo = Topology(2, 2, 4, 10)
    hp = schedule(50, topo, L_n=1e3)
    w = init_weights(topo, hp, rng)
    w.outer[:] = rng.uniform(-50, 50, size=10)
    X = rng.uniform(-3 * hp.alpha_n, 3 * hp.alpha_n, size=(2000, 2))
    out = predict(w, hp, X)
    assert np.all(out[~in_cube(X, hp.alpha_n)] == 0)
    assert np.all(np.abs(out) <= hp.beta_n)
    assert predict(WeightVector.zeros(topo), hp, np.zeros(2)) == 0.0


def test_closed_cube_boundary():
    assert in_cube(np.array([[2.0, -2.0]]), 2.0)[0]
    assert not in_cube(np.array([[2.0 + 1e-12, 0.0]]), 2.0)[0]


def test_regressor_api():
    rng = np.random.default_rng(7)
    X = rng.uniform(-2, 2, size=(30, 1))
    y = np.sin(2 * X[:, 0])
    est = OverparamRegressor(n_subnetworks=16, inverse_step=200.0, random_state=0)
    assert est.get_params()["n_subnetworks"] == 16
    est.fit(X, y)
    assert est.n_features_in_ == 1
    assert est.predict(X).shape == (30,)
    assert est.trace_.risk[-1] < est.trace_.risk[0]
    assert not est.conditions_.all_ok
    twin = clone(est).fit(X, y)
    assert np.array_equal(twin.predict(X), est.predict(X))
    with pytest.raises(ValueError):
        est.predict(np.zeros((3, 2)))
