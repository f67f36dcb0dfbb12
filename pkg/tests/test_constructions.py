import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from overparam.checks import modular_strip_masses
from overparam.constructions import (CubeSpec, GridSpec, PreconditionError, boundary_strips,
                                     indicator_network, indicator_subnetwork, lemma7_grid,
                                     perturb, piecewise_constant_network, select_shift,
                                     shifted_grid_network, strip_masses)
from overparam.experiments import target_function
from overparam.net import Topology, WeightVector, evaluate

T1 = Topology(1, 2, 2, 1)


def test_indicator_first_level_weights():
    cube = CubeSpec([0.3], [0.9], 0.1)
    layer0, hidden = indicator_subnetwork(T1, cube, math.e, strict=False)
    assert layer0[0, 1] == pytest.approx(40.0)
    assert layer0[0, 0] == pytest.approx(-40.0 * 0.3)
    assert layer0[1, 1] == pytest.approx(-40.0)
    assert layer0[1, 0] == pytest.approx(40.0 * 0.9)
    assert hidden[0, 0, 1:3] == pytest.approx([8.0, 8.0])
    assert hidden[0, 0, 0] == pytest.approx(-8.0 * 1.5)


def test_indicator_pass_through_levels_and_zeros():
    topo = Topology(2, 4, 5, 1)
    cube = CubeSpec([0, 0], [1, 1], 0.1)
    n = 1000
    layer0, hidden = indicator_subnetwork(topo, cube, n)
    lg2 = math.log(n) ** 2
    assert not np.any(layer0[4:])
    assert layer0[0, 2] == 0 and layer0[2, 2] == 0 and layer0[1, 1] == 0
    for level in (2, 3):
        row = hidden[level - 1, 0]
        assert row[1] == pytest.approx(6 * lg2) and row[0] == pytest.approx(-3 * lg2)
        assert not np.any(row[2:])
        assert not np.any(hidden[level - 1, 1:])
    assert not np.any(hidden[0, 0, 5:]) and not np.any(hidden[0, 1:])


def test_indicator_preconditions():
    cube = CubeSpec([0.0], [1.0], 0.1)
    with pytest.raises(PreconditionError):
        indicator_subnetwork(T1, cube, 5)          # n < 8d
    with pytest.raises(PreconditionError):
        indicator_subnetwork(T1, cube, 15)         # n < e^(r+1) ~ 20.1
    indicator_subnetwork(T1, cube, 21)


@pytest.mark.parametrize("u,v,delta", [([0.0], [0.1], 0.1), ([0.0], [1.0], 0.0),
                                       ([0.0], [1.0], 1.5), ([0.0, 0.0], [1.0], 0.1)])
def test_cube_spec_rejects(u, v, delta):
    with pytest.raises(ValueError):
        CubeSpec(u, v, delta)


@pytest.mark.parametrize("d,L,n,delta", [(1, 2, 100, 0.1), (1, 3, 1000, 0.05),
                                         (2, 2, 1000, 0.1), (2, 3, 1000, 0.05)])
def test_indicator_sandwich(d, L, n, delta):
    rng = np.random.default_rng(0)
    topo = Topology(d, L, 2 * d, 1)
    cube = CubeSpec(np.full(d, -0.4), np.full(d, 0.8), delta)
    w = indicator_network(topo, cube, n, strict=False)
    lg = math.log(n)
    X = rng.uniform(-lg, lg, size=(5000, d))
    f = evaluate(w, X)
    assert np.all(f[cube.inner_mask(X)] >= 1 - 1 / n)
    assert np.all(f[cube.outer_mask(X)] <= 1 / n)
    for _ in range(5):
        g = evaluate(perturb(w, lg, rng), X)
        assert np.all(g[cube.inner_mask(X)] >= 1 - 1 / n)
        assert np.all(g[cube.outer_mask(X)] <= 1 / n)


def test_perturb_properties():
    rng = np.random.default_rng(1)
    topo = Topology(2, 3, 4, 3)
    w = WeightVector.from_flat(topo, rng.normal(size=WeightVector.zeros(topo).to_flat().size))
    same = perturb(w, 0.0, rng)
    assert np.array_equal(same.to_flat(), w.to_flat())
    p = perturb(w, 0.25, rng)
    assert np.array_equal(p.outer, w.outer)
    assert np.max(np.abs(p.inner_flat() - w.inner_flat())) <= 0.25
    assert np.any(p.inner_flat() != w.inner_flat())
    with pytest.raises(ValueError):
        perturb(w, -1.0)


def test_boundary_strips_examples():
    grid = GridSpec([0.0], 1.0, 2, 0.1)
    inside = boundary_strips(grid)
    assert inside(np.array([[0.45]]))[0]
    assert inside(np.array([[0.5]]))[0]
    assert not inside(np.array([[0.25]]))[0]
    grid2 = GridSpec([0.0, 0.0], 2.0, 4, 0.2)
    assert not boundary_strips(grid2)(grid2.centers()).any()


def test_piecewise_constant_zero_and_constant():
    topo = Topology(1, 2, 2, 4)
    grid = GridSpec([-1.0], 2.0, 4, 0.05)
    n = 1000
    w = piecewise_constant_network(target_function("zero"), grid, n, topo)
    assert not np.any(w.outer)
    assert not np.any(evaluate(w, np.linspace(-5, 5, 50)[:, None]))
    c = 1.7
    grid1 = GridSpec([-1.0], 2.0, 1, 0.1)
    w1 = piecewise_constant_network(lambda X: np.full(len(X), c), grid1, n, topo.with_subnetworks(1))
    assert abs(evaluate(w1, np.array([[0.0]]))[0] - c) <= c * (1 / n)


def test_piecewise_constant_slots_and_outer_values():
    topo = Topology(1, 2, 2, 10)
    grid = GridSpec([0.0], 1.0, 3, 0.05)
    m = target_function("affine")
    w = piecewise_constant_network(m, grid, 1000, topo, slots=[7, 2, 5])
    centres = grid.centers()
    assert w.outer[[7, 2, 5]] == pytest.approx(m(centres))
    assert np.count_nonzero(w.outer) == 3
    with pytest.raises(ValueError):
        piecewise_constant_network(m, grid, 1000, topo, slots=[1, 1, 2])
    with pytest.raises(PreconditionError):
        piecewise_constant_network(m, grid, 1000, topo.with_subnetworks(2))


def test_piecewise_constant_slot_invariance():
    rng = np.random.default_rng(2)
    topo = Topology(2, 2, 4, 12)
    grid = GridSpec([-1.0, -1.0], 2.0, 3, 0.05)
    m = target_function("sin_product")
    X = rng.uniform(-2, 2, size=(500, 2))
    base = evaluate(piecewise_constant_network(m, grid, 1000, topo), X)
    slots = rng.permutation(12)[:9]
    moved = evaluate(piecewise_constant_network(m, grid, 1000, topo, slots=slots), X)
    assert np.allclose(base, moved, rtol=0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(1, 2), st.integers(0, 2 ** 32 - 1))
def test_piecewise_constant_boundedness(K, d, seed):
    rng = np.random.default_rng(seed)
    n = 1000
    topo = Topology(d, 2, 2 * d, K ** d)
    delta = min(1.0, 2.0 / K) * rng.uniform(0.1, 1.0)
    grid = GridSpec(np.full(d, -1.3), 2.0, K, delta)
    m = target_function("sin_product")
    w = piecewise_constant_network(m, grid, n, topo)
    X = rng.uniform(-math.log(n), math.log(n), size=(3000, d))
    assert np.max(np.abs(evaluate(w, X))) <= 1.0 * (3 ** d + K ** d / n)


def test_select_shift_examples():
    K = 3
    grid0 = lemma7_grid(K, 1, [0])
    centres = grid0.centers()
    sel = select_shift(centres, K)
    assert sel.index[0] == 0 and sel.masses[0, 0] == 0
    rng = np.random.default_rng(3)
    sample = rng.uniform(-K, K, size=(3000, 1))
    sel = select_shift(sample, K)
    brute = [strip_masses(sample, K)[0, k] for k in range(K)]
    assert sel.selected_mass[0] == min(brute) <= 1 / K
    with pytest.raises(ValueError):
        select_shift(np.empty((0, 1)), K)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_select_shift_pigeonhole(K, d, seed):
    rng = np.random.default_rng(seed)
    sample = rng.uniform(-K + 0.1, K - 0.1, size=(int(rng.integers(1, 300)), d))
    sel = select_shift(sample, K)
    assert np.all(sel.selected_mass <= 1 / K + 1e-12)
    # the K strip families of an axis partition the line, so their masses sum to 1
    assert np.allclose(sel.masses.sum(axis=1), 1.0)
    assert np.allclose(sel.masses, modular_strip_masses(sample, K), atol=2 / len(sample))


def test_lemma7_grid_geometry():
    g = lemma7_grid(3, 2, [1, 2])
    assert g.K == 10 and g.side == pytest.approx(2 / 3) and g.delta == pytest.approx(1 / 9)
    assert g.lower == pytest.approx([-3 - 2 / 3 + 2 / 9, -3 - 2 / 3 + 4 / 9])
    assert g.hyperplanes(0)[-1] == pytest.approx(3 + 2 / 9)


def test_shifted_grid_structure():
    n = 10_000
    rng = np.random.default_rng(4)
    sample = rng.uniform(-2, 2, size=(2000, 1))
    m = target_function("sin_product")
    topo = Topology(1, 2, 2, 130)
    w, info = shifted_grid_network(m, 2, n, sample, topo)
    assert info.repetitions == 25
    active = np.count_nonzero(np.any(w.layer0 != 0, axis=(1, 2)))
    assert active == 125
    assert np.max(np.abs(w.outer)) <= info.m_sup / 25
    assert w.layer0[0, 0, 1] == pytest.approx(4 * 1 * 4 * math.log(n) ** 2)
    assert not np.any(w.outer[125:])
    w0, _ = shifted_grid_network(target_function("zero"), 2, n, sample, topo)
    assert not np.any(evaluate(w0, np.linspace(-4, 4, 33)[:, None]))


def test_shifted_grid_preconditions():
    sample = np.zeros((5, 1))
    m = target_function("affine")
    with pytest.raises(PreconditionError):
        shifted_grid_network(m, 2, 10_000, sample, Topology(1, 2, 2, 124))
    with pytest.raises(PreconditionError):
        shifted_grid_network(m, 3, 50, sample, Topology(1, 2, 2, 1000))   # K > log n - 1
    with pytest.raises(ValueError):
        shifted_grid_network(m, 2, 10_000, np.empty((0, 1)), Topology(1, 2, 2, 125))
