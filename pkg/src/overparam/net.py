"""Parallel logistic network: K_n depth-L width-r subnetworks summed by outer weights.

Weight indexing follows ``w[k, i, j]`` at level ``l``: the weight from neuron ``j``
of layer ``l`` into neuron ``i`` of layer ``l + 1``. Column ``j = 0`` is the bias.
Indices here are zero-based, so the output neuron of a subnetwork is row 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Budget (in float64 entries) for one chunk of (points x subnetworks x width).
_CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class Topology:
    d: int
    L: int
    r: int
    K_n: int

    def __post_init__(self):
        for name in ("d", "L", "r", "K_n"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.L < 2:
            raise ValueError(f"L must be >= 2, got {self.L}")
        if self.r < 2 * self.d:
            raise ValueError(f"r must be >= 2*d = {2 * self.d}, got {self.r}")
        if self.K_n < 1:
            raise ValueError(f"K_n must be >= 1, got {self.K_n}")

    def with_subnetworks(self, K_n: int) -> "Topology":
        return Topology(self.d, self.L, self.r, K_n)

    def to_dict(self) -> dict:
        return {"d": self.d, "L": self.L, "r": self.r, "K_n": self.K_n}


def param_count(topo: Topology) -> int:
    """Number of scalar weights, ``K_n * (1 + (L-1) r (r+1) + r (d+1))``."""
    d, L, r = topo.d, topo.L, topo.r
    return topo.K_n * (1 + (L - 1) * r * (r + 1) + r * (d + 1))


@dataclass
class WeightVector:
    """Dense weight storage.

    ``outer`` has shape (K_n,), ``layer0`` (K_n, r, d+1) and ``hidden``
    (K_n, L-1, r, r+1) where ``hidden[:, l-1]`` holds level ``l``. At level L-1
    only row 0 feeds the output; the other rows are stored but inert.
    """

    topology: Topology
    outer: np.ndarray
    layer0: np.ndarray
    hidden: np.ndarray

    def __post_init__(self):
        t = self.topology
        self.outer = np.asarray(self.outer, dtype=float)
        self.layer0 = np.asarray(self.layer0, dtype=float)
        self.hidden = np.asarray(self.hidden, dtype=float)
        expected = {
            "outer": (t.K_n,),
            "layer0": (t.K_n, t.r, t.d + 1),
            "hidden": (t.K_n, t.L - 1, t.r, t.r + 1),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @classmethod
    def zeros(cls, topo: Topology) -> "WeightVector":
        return cls(
            topo,
            np.zeros(topo.K_n),
            np.zeros((topo.K_n, topo.r, topo.d + 1)),
            np.zeros((topo.K_n, topo.L - 1, topo.r, topo.r + 1)),
        )

    @classmethod
    def from_flat(cls, topo: Topology, flat: np.ndarray, copy: bool = True) -> "WeightVector":
        """Unpack a flat vector; with ``copy=False`` the arrays are views into ``flat``."""
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (param_count(topo),):
            raise ValueError(
                f"flat vector has shape {flat.shape}, expected ({param_count(topo)},)"
            )
        K, d, L, r = topo.K_n, topo.d, topo.L, topo.r
        n0 = K * r * (d + 1)
        outer = flat[:K]
        layer0 = flat[K:K + n0].reshape(K, r, d + 1)
        hidden = flat[K + n0:].reshape(K, L - 1, r, r + 1)
        if copy:
            outer, layer0, hidden = outer.copy(), layer0.copy(), hidden.copy()
        return cls(topo, outer, layer0, hidden)

    def to_flat(self) -> np.ndarray:
        """Outer weights first, then level 0, then levels 1..L-1."""
        return np.concatenate([self.outer, self.layer0.ravel(), self.hidden.ravel()])

    def copy(self) -> "WeightVector":
        return WeightVector(
            self.topology, self.outer.copy(), self.layer0.copy(), self.hidden.copy()
        )

    def inner_flat(self) -> np.ndarray:
        return np.concatenate([self.layer0.ravel(), self.hidden.ravel()])

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.outer).all()
            and np.isfinite(self.layer0).all()
            and np.isfinite(self.hidden).all()
        )

    def get(self, level: int, k: int, i: int, j: int) -> float:
        """Read ``w_{k,i,j}^{(level)}``; level L addresses the outer weight of subnetwork k."""
        arr, idx = self._slot(level, k, i, j)
        return float(arr[idx])

    def set(self, level: int, k: int, i: int, j: int, value: float) -> None:
        arr, idx = self._slot(level, k, i, j)
        arr[idx] = value

    def _slot(self, level, k, i, j):
        L = self.topology.L
        if level == L:
            if i != 0 or j != 0:
                raise IndexError("outer weights are addressed as (L, k, 0, 0)")
            return self.outer, (k,)
        if level == 0:
            return self.layer0, (k, i, j)
        if 1 <= level < L:
            return self.hidden, (k, level - 1, i, j)
        raise IndexError(f"level must be in 0..{L}, got {level}")


def logistic(x):
    """Logistic squasher 1/(1+exp(-x)), overflow-free for any finite input."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


@dataclass
class Activations:
    """Neuron outputs for a batch of N points.

    Internally each level is kept as ``tanh(z / 2)`` with shape (K_n, r, N)
    (level L: (K_n, N)), since ``sigma(z) = (1 + tanh(z / 2)) / 2``. ``level(l)``
    returns the logistic outputs ``f_{k,i}^{(l)}`` as an (N, K_n, r) array.
    """

    hidden_t: list
    output_t: np.ndarray

    @property
    def output(self) -> np.ndarray:
        """``f_{k,1}^{(L)}`` for every point, shape (N, K_n)."""
        return (0.5 + 0.5 * self.output_t).T

    def level(self, l: int) -> np.ndarray:
        if l == len(self.hidden_t) + 1:
            return self.output
        return (0.5 + 0.5 * self.hidden_t[l - 1]).transpose(2, 0, 1)


def _check_points(topo: Topology, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != topo.d:
        raise ValueError(
            f"points have dimension {X.shape[-1] if X.ndim else 0}, topology expects d={topo.d}"
        )
    return X


def _with_bias(X: np.ndarray) -> np.ndarray:
    return np.concatenate([np.ones((X.shape[0], 1)), X], axis=1)


def _forward_batch(w: WeightVector, X: np.ndarray) -> Activations:
    # With t = tanh(z/2), a level computing sigma(W f + b) from f = (1 + t)/2
    # becomes t' = tanh(W t / 4 + (b + sum W / 2) / 2); only weights are rescaled.
    topo = w.topology
    K, r, L = topo.K_n, topo.r, topo.L
    N = X.shape[0]
    t = (0.5 * w.layer0).reshape(K * r, topo.d + 1) @ _with_bias(X).T
    t = np.tanh(t, out=t).reshape(K, r, N)
    hidden_t = [t]
    for l in range(1, L - 1):
        W = w.hidden[:, l - 1]
        shift = 0.5 * W[:, :, 0] + 0.25 * W[:, :, 1:].sum(axis=2)
        z = np.matmul(0.25 * W[:, :, 1:], t)
        z += shift[:, :, None]
        t = np.tanh(z, out=z)
        hidden_t.append(t)
    W = w.hidden[:, L - 2, 0]
    shift = 0.5 * W[:, 0] + 0.25 * W[:, 1:].sum(axis=1)
    z = np.einsum("kj,kjn->kn", 0.25 * W[:, 1:], t)
    z += shift[:, None]
    return Activations(hidden_t, np.tanh(z, out=z))


def _chunks(topo: Topology, N: int):
    size = max(1, _CHUNK_ENTRIES // max(1, topo.K_n * topo.r))
    for start in range(0, N, size):
        yield slice(start, min(N, start + size))


def forward(topo: Topology, w: WeightVector, x):
    """Evaluate the network at a single point; returns ``(value, activations)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("forward takes a single point; use evaluate for batches")
    X = _check_points(topo, x)
    acts = _forward_batch(w, X)
    return float(acts.output[0] @ w.outer), acts


def _outputs(acts: Activations) -> np.ndarray:
    return 0.5 + 0.5 * acts.output_t


def evaluate(w: WeightVector, X) -> np.ndarray:
    """Network values ``f_w(x)`` for every row of ``X``, chunked to bound memory."""
    topo = w.topology
    X = _check_points(topo, X)
    out = np.empty(X.shape[0])
    for sl in _chunks(topo, X.shape[0]):
        out[sl] = w.outer @ _outputs(_forward_batch(w, X[sl]))
    return out


def subnetwork_outputs(w: WeightVector, X) -> np.ndarray:
    """Matrix of ``f_{k,1}^{(L)}(x_s)`` with shape (N, K_n)."""
    topo = w.topology
    X = _check_points(topo, X)
    out = np.empty((X.shape[0], topo.K_n))
    for sl in _chunks(topo, X.shape[0]):
        out[sl] = _outputs(_forward_batch(w, X[sl])).T
    return out


def backward(w: WeightVector, X, coef, acts: Activations | None = None) -> WeightVector:
    """Return ``sum_s coef_s * d f_w(X_s) / d w`` as a WeightVector.

    Reverse accumulation over all subnetworks at once. With t = tanh(z / 2),
    sigma'(z) = (1 - t^2) / 4; the 1/4 is folded into the small weight arrays.
    """
    topo = w.topology
    X = _check_points(topo, X)
    coef = np.asarray(coef, dtype=float).reshape(-1)
    if coef.shape[0] != X.shape[0]:
        raise ValueError("coef must have one entry per point")
    if acts is None:
        acts = _forward_batch(w, X)
    L = topo.L
    g = WeightVector.zeros(topo)

    tL = acts.output_t
    g.outer = 0.5 * (coef.sum() + tL @ coef)
    # error signal at the output pre-activation of each subnetwork, shape (K, N)
    delta = tL * tL
    np.subtract(1.0, delta, out=delta)
    delta *= (0.25 * w.outer)[:, None]
    delta *= coef[None, :]
    t_prev = acts.hidden_t[L - 2]
    g.hidden[:, L - 2, 0] = _level_grad(delta[:, None, :], t_prev)[:, 0]
    Xb = _with_bias(X)
    scale = 0.25 * w.hidden[:, L - 2, 0, 1:]
    if L == 2:
        # sensitivity at level 0 is scale[k,i] * delta[k,s] * (1 - t[k,i,s]^2); the
        # scale factor is constant over points, so apply it after summing them
        K, r, N = t_prev.shape
        sq = np.multiply(t_prev, t_prev)
        sq *= delta[:, None, :]
        part = (sq.reshape(K * r, N) @ Xb).reshape(K, r, topo.d + 1)
        g.layer0 = scale[:, :, None] * ((delta @ Xb)[:, None, :] - part)
        return g
    back = scale[:, :, None] * delta[:, None, :]
    for l in range(L - 2, 0, -1):
        back *= _one_minus_square(acts.hidden_t[l])
        g.hidden[:, l - 1] = _level_grad(back, acts.hidden_t[l - 1])
        back = np.matmul((0.25 * w.hidden[:, l - 1, :, 1:]).transpose(0, 2, 1), back)
    back *= _one_minus_square(acts.hidden_t[0])
    K, r, N = back.shape
    g.layer0 = (back.reshape(K * r, N) @ Xb).reshape(K, r, topo.d + 1)
    return g


def _one_minus_square(t: np.ndarray) -> np.ndarray:
    out = t * t
    return np.subtract(1.0, out, out=out)


def _level_grad(delta: np.ndarray, t_prev: np.ndarray) -> np.ndarray:
    """Weight gradient ``sum_s delta[k,i,s] * [1, f_prev[k,:,s]]`` with f = (1 + t) / 2."""
    s = delta.sum(axis=2)
    cross = np.matmul(delta, t_prev.transpose(0, 2, 1))
    out = np.empty(delta.shape[:2] + (t_prev.shape[1] + 1,))
    out[:, :, 0] = s
    out[:, :, 1:] = 0.5 * (s[:, :, None] + cross)
    return out


def network_gradient(topo: Topology, w: WeightVector, x) -> WeightVector:
    """Partial derivatives of ``f_w(x)`` with respect to every weight."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("network_gradient takes a single point")
    X = _check_points(topo, x)
    return backward(w, X, np.ones(1))
