"""Hand-set weight constructions: cube indicators and grid approximants.

An indicator subnetwork outputs nearly 1 on a cube shrunk by ``delta`` and
nearly 0 outside the cube enlarged by ``delta``. Summing indicators of the
cells of a grid, weighted by the target at the cell centres, gives a
piecewise-constant approximant. The shifted-grid variant repeats a scaled
approximant many times and moves the grid so that the strips around grid
faces carry little sample mass.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .net import Topology, WeightVector
from .validation import check_points, check_random_state


class PreconditionError(ValueError):
    """A construction was requested outside the range where its guarantee holds."""


@dataclass(frozen=True)
class CubeSpec:
    u: np.ndarray
    v: np.ndarray
    delta: float

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if u.shape != v.shape or u.ndim != 1:
            raise ValueError("u and v must be vectors of equal length")
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if np.any(v - u < 2 * self.delta - 1e-12):
            raise ValueError("need v - u >= 2*delta in every coordinate")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def inner_mask(self, X) -> np.ndarray:
        """Points of [u + delta, v - delta]."""
        X = np.asarray(X, dtype=float)
        return np.all((X >= self.u + self.delta) & (X <= self.v - self.delta), axis=1)

    def outer_mask(self, X) -> np.ndarray:
        """Points with some coordinate outside [u - delta, v + delta]."""
        X = np.asarray(X, dtype=float)
        return np.any((X < self.u - self.delta) | (X > self.v + self.delta), axis=1)


def check_lemma_preconditions(topo: Topology, n: int) -> None:
    if topo.L < 2 or topo.r < 2 * topo.d:
        raise PreconditionError("need L >= 2 and r >= 2d")
    if n < 8 * topo.d:
        raise PreconditionError(f"need n >= 8d = {8 * topo.d}, got n={n}")
    if n < math.exp(topo.r + 1):
        raise PreconditionError(
            f"need n >= exp(r+1) = {math.exp(topo.r + 1):.4g}, got n={n}"
        )


def indicator_subnetwork(topo: Topology, cube: CubeSpec, n: int, *, strict: bool = True,
                         aggregate_offset: float = 0.5):
    """Weights ``(layer0, hidden)`` of one subnetwork acting as a cube indicator.

    ``layer0`` has shape (r, d+1) and ``hidden`` (L-1, r, r+1). Rows not used by
    the construction are zero. ``aggregate_offset`` is the 1/2 in the
    aggregation bias ``-8 (log n)^2 (2d - 1/2)``. ``strict=False`` skips the
    checks on n (the weights are still well defined).
    """
    if cube.u.shape[0] != topo.d:
        raise ValueError(f"cube has dimension {cube.u.shape[0]}, topology expects {topo.d}")
    if strict:
        check_lemma_preconditions(topo, n)
    return _indicator_weights(topo, cube.u, cube.v, cube.delta, n, aggregate_offset)


def _indicator_weights(topo: Topology, u, v, delta: float, n: int, aggregate_offset: float = 0.5):
    d, L, r = topo.d, topo.L, topo.r
    lg2 = math.log(n) ** 2
    slope = 4 * d * lg2 / delta
    layer0 = np.zeros((r, d + 1))
    for j in range(d):
        # neuron j fires when x_j > u_j, neuron j+d when x_j < v_j
        layer0[j, j + 1] = slope
        layer0[j, 0] = -slope * u[j]
        layer0[j + d, j + 1] = -slope
        layer0[j + d, 0] = slope * v[j]
    hidden = np.zeros((L - 1, r, r + 1))
    hidden[0, 0, 1:2 * d + 1] = 8 * lg2
    hidden[0, 0, 0] = -8 * lg2 * (2 * d - aggregate_offset)
    for level in range(2, L):
        hidden[level - 1, 0, 1] = 6 * lg2
        hidden[level - 1, 0, 0] = -3 * lg2
    return layer0, hidden


def place_subnetwork(w: WeightVector, slot: int, layer0: np.ndarray, hidden: np.ndarray,
                     outer: float) -> None:
    """Write one subnetwork's weights and its outer coefficient into ``w`` in place."""
    w.layer0[slot] = layer0
    w.hidden[slot] = hidden
    w.outer[slot] = outer


def indicator_network(topo: Topology, cube: CubeSpec, n: int, *, strict: bool = True,
                      slot: int = 0) -> WeightVector:
    """Full network whose output is the indicator subnetwork in ``slot``."""
    w = WeightVector.zeros(topo)
    place_subnetwork(w, slot, *indicator_subnetwork(topo, cube, n, strict=strict), 1.0)
    return w


def perturb(w: WeightVector, bound: float, rng=None) -> WeightVector:
    """Copy of ``w`` with independent U[-bound, bound] noise on every inner weight."""
    if bound < 0:
        raise ValueError(f"bound must be nonnegative, got {bound}")
    rng = check_random_state(rng)
    out = w.copy()
    if bound == 0:
        return out
    out.layer0 += rng.uniform(-bound, bound, size=w.layer0.shape)
    out.hidden += rng.uniform(-bound, bound, size=w.hidden.shape)
    return out


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned grid of K^d half-open cells of side ``width / K``.

    ``a`` is the lower corner before shifting; ``shift`` moves the grid
    along each axis.
    """

    a: np.ndarray
    width: float
    K: int
    delta: float
    shift: np.ndarray = field(default=None)

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if a.ndim != 1:
            raise ValueError("a must be a vector")
        if not self.width > 0:
            raise ValueError(f"width must be positive, got {self.width}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        shift = np.zeros_like(a) if self.shift is None else np.asarray(self.shift, dtype=float)
        if shift.shape != a.shape:
            raise ValueError("shift must have one entry per axis")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "shift", shift)

    @property
    def d(self) -> int:
        return self.a.shape[0]

    @property
    def side(self) -> float:
        return self.width / self.K

    @property
    def lower(self) -> np.ndarray:
        return self.a + self.shift

    def cells(self):
        """Yield ``(u, v, center)`` for every cell, last axis varying fastest."""
        for idx in itertools.product(range(self.K), repeat=self.d):
            u = self.lower + np.asarray(idx, dtype=float) * self.side
            v = u + self.side
            yield u, v, u + 0.5 * self.side

    def centers(self) -> np.ndarray:
        return np.array([c for _, _, c in self.cells()])

    def hyperplanes(self, axis: int) -> np.ndarray:
        return self.lower[axis] + self.side * np.arange(self.K + 1)


def boundary_strips(grid: GridSpec, delta: float | None = None):
    """Predicate for the union of open strips ``|x_i - face| < delta`` around grid faces."""
    delta = grid.delta if delta is None else delta
    planes = [grid.hyperplanes(i) for i in range(grid.d)]

    def contains(X) -> np.ndarray:
        X = check_points(X, grid.d)
        hit = np.zeros(X.shape[0], dtype=bool)
        for i, h in enumerate(planes):
            hit |= np.min(np.abs(X[:, i, None] - h[None, :]), axis=1) < delta
        return hit

    return contains


def sup_norm(m, points) -> float:
    """Estimate ``sup |m|`` by maximising over the given sample."""
    return float(np.max(np.abs(m(check_points(points)))))


def piecewise_constant_network(m, grid: GridSpec, n: int, topo: Topology, slots=None, *,
                               strict: bool = True, scale: float = 1.0,
                               w: WeightVector | None = None) -> WeightVector:
    """Sum of cell indicators weighted by ``scale * m(cell centre)``.

    ``slots`` lists K^d distinct subnetwork indices (default 0..K^d-1). When
    ``w`` is given the subnetworks are written into it and it is returned;
    otherwise a zero network is used.
    """
    if grid.d != topo.d:
        raise ValueError(f"grid has dimension {grid.d}, topology expects {topo.d}")
    count = grid.K ** grid.d
    if slots is None:
        slots = range(count)
    slots = [int(s) for s in slots]
    if len(slots) != count:
        raise ValueError(f"need exactly K^d = {count} slots, got {len(slots)}")
    if len(set(slots)) != count:
        raise ValueError("slots must be pairwise distinct")
    if count > topo.K_n or max(slots) >= topo.K_n or min(slots) < 0:
        raise PreconditionError(f"K^d = {count} cells need that many of the K_n = {topo.K_n} subnetworks")
    if not 0 < grid.delta <= 1:
        raise PreconditionError(f"need 0 < delta <= 1, got {grid.delta}")
    if strict:
        check_lemma_preconditions(topo, n)
    out = WeightVector.zeros(topo) if w is None else w
    cells = list(grid.cells())
    values = scale * np.asarray(m(np.array([c for _, _, c in cells])), dtype=float)
    for slot, (u, v, _), value in zip(slots, cells, values):
        layer0, hidden = _indicator_weights(topo, u, v, grid.delta, n)
        place_subnetwork(out, slot, layer0, hidden, value)
    return out


def lemma7_grid(K: int, d: int, shift_index=None) -> GridSpec:
    """Grid of (K^2+1)^d cells of side 2/K on [-K-2/K, K]^d, shifted by k * 2/K^2 per axis."""
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    shift = np.zeros(d) if shift_index is None else 2.0 * np.asarray(shift_index, dtype=float) / K ** 2
    a = np.full(d, -K - 2.0 / K)
    return GridSpec(a, 2 * K + 2.0 / K, K * K + 1, 1.0 / K ** 2, shift)


def strip_masses(sample, K: int, delta: float | None = None) -> np.ndarray:
    """Empirical mass of the face strips for every axis and candidate shift, shape (d, K)."""
    sample = check_points(sample)
    if sample.shape[0] == 0:
        raise ValueError("sample must be nonempty")
    d = sample.shape[1]
    delta = 1.0 / K ** 2 if delta is None else delta
    masses = np.empty((d, K))
    for k in range(K):
        grid = lemma7_grid(K, d, np.full(d, k))
        for axis in range(d):
            h = grid.hyperplanes(axis)
            near = np.min(np.abs(sample[:, axis, None] - h[None, :]), axis=1) < delta
            masses[axis, k] = near.mean()
    return masses


@dataclass
class ShiftSelection:
    index: np.ndarray
    masses: np.ndarray

    @property
    def selected_mass(self) -> np.ndarray:
        return self.masses[np.arange(len(self.index)), self.index]


def select_shift(sample, K: int, delta: float | None = None) -> ShiftSelection:
    """Per axis, the shift k in 0..K-1 whose face strips hold the least sample mass.

    The K strip families of an axis are disjoint, so the minimum is at most 1/K.
    Ties go to the smallest k.
    """
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    masses = strip_masses(sample, K, delta)
    return ShiftSelection(np.argmin(masses, axis=1), masses)


@dataclass
class ShiftedGridInfo:
    grid: GridSpec
    selection: ShiftSelection
    repetitions: int
    active_slots: np.ndarray
    m_sup: float


def shifted_grid_network(m, K: int, n: int, sample, topo: Topology, *, m_sup: float | None = None,
                         slots=None, strict: bool = True,
                         alpha_n: float | None = None) -> tuple:
    """Repeated, scaled, shifted grid approximant of ``m``.

    Builds (K^2+1)^(2d) copies of the (K^2+1)^d-cell approximant of
    ``m / (K^2+1)^(2d)`` with margin 1/K^2, on the grid shift chosen by
    ``select_shift``. Returns ``(weights, ShiftedGridInfo)``.
    """
    d = topo.d
    sample = check_points(sample, d)
    if sample.shape[0] == 0:
        raise ValueError("sample must be nonempty")
    if K < 2:
        raise PreconditionError(f"need K >= 2, got {K}")
    cells = (K * K + 1) ** d
    reps = (K * K + 1) ** (2 * d)
    total = cells * reps
    if total > topo.K_n:
        raise PreconditionError(f"(K^2+1)^(3d) = {total} exceeds K_n = {topo.K_n}")
    if strict:
        check_lemma_preconditions(topo, n)
        alpha = math.log(n) if alpha_n is None else alpha_n
        if not K <= alpha - 1:
            raise PreconditionError(f"need K <= alpha_n - 1 = {alpha - 1:.4g}, got K={K}")
    selection = select_shift(sample, K)
    grid = lemma7_grid(K, d, selection.index)
    if m_sup is None:
        m_sup = sup_norm(m, np.vstack([sample, grid.centers()]))
    slots = np.arange(total) if slots is None else np.asarray(slots, dtype=int)
    if slots.shape != (total,) or len(set(slots.tolist())) != total:
        raise ValueError(f"need {total} pairwise distinct slots")
    w = WeightVector.zeros(topo)
    for rep in range(reps):
        piecewise_constant_network(m, grid, n, topo, slots[rep * cells:(rep + 1) * cells],
                                   strict=False, scale=1.0 / reps, w=w)
    return w, ShiftedGridInfo(grid, selection, reps, slots, m_sup)
