"""Gradient-descent-trained parallel network regressor.

The functional core (``schedule``, ``init_weights``, ``empirical_risk``,
``risk_gradient``, ``train``, ``predict``) is wrapped by ``OverparamRegressor``,
which follows the scikit-learn estimator protocol.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .net import Topology, WeightVector, _forward_batch, backward, evaluate, param_count
from .validation import check_dataset, check_points, check_random_state

logger = logging.getLogger(__name__)

_GRAD_CHUNK = 100_000
# Largest (subnetworks x in-cube points) table kept by the saturation cache.
_CACHE_ENTRIES = 4_000_000


class TrainingDiverged(RuntimeError):
    """Raised when the risk or its gradient becomes non-finite during training."""

    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite {what} at gradient descent step {step}")
        self.step = step
        self.what = what


@dataclass(frozen=True)
class Hyperparams:
    n: int
    tau: float
    c1: float
    c2: float
    c3: float
    c4: float
    L_n: float
    theory_mode: bool = False

    @property
    def log_n(self) -> float:
        return math.log(self.n)

    @property
    def alpha_n(self) -> float:
        return self.c1 * self.log_n

    @property
    def beta_n(self) -> float:
        return self.c3 * self.log_n

    @property
    def step_size(self) -> float:
        return 1.0 / self.L_n

    @property
    def t_n(self) -> int:
        return int(math.ceil(self.c4 * self.L_n * self.log_n))

    def to_dict(self) -> dict:
        return {
            "n": self.n, "tau": self.tau, "c1": self.c1, "c2": self.c2,
            "c3": self.c3, "c4": self.c4, "L_n": self.L_n,
            "theory_mode": self.theory_mode,
        }


def default_tau(d: int) -> float:
    return 0.4 / (d + 1)


def theory_inverse_step(n: float, topo: Topology) -> float:
    """Smallest L_n allowed by the theorem: (log n)^(10L+10) * K_n^(3/2)."""
    return math.log(n) ** (10 * topo.L + 10) * topo.K_n ** 1.5


def schedule(n: int, topo: Topology, tau: float | None = None, c1: float = 1.0,
             c2: float = 0.1, c3: float = 1.0, c4: float = 1.0,
             L_n: float | None = None) -> Hyperparams:
    """Build the hyperparameter schedule for sample size ``n``.

    Without ``L_n`` the theorem's lower bound on the inverse step size is used
    ("theory mode"); an explicit value gives "desk mode".
    """
    if n < 2:
        raise ValueError(f"n must be >= 2 so that log n > 0, got {n}")
    if tau is None:
        tau = default_tau(topo.d)
    if not 0 < tau < 1 / (topo.d + 1):
        raise ValueError(f"tau must lie in (0, 1/(d+1)) = (0, {1 / (topo.d + 1):.6g}), got {tau}")
    for name, value in (("c1", c1), ("c2", c2), ("c3", c3), ("c4", c4)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    theory = L_n is None
    if theory:
        L_n = theory_inverse_step(n, topo)
    if not (L_n > 0 and math.isfinite(L_n)):
        raise ValueError(f"L_n must be a positive finite number, got {L_n}")
    return Hyperparams(n, float(tau), float(c1), float(c2), float(c3), float(c4),
                       float(L_n), theory)


@dataclass
class Condition:
    name: str
    description: str
    lhs: float
    rhs: float
    satisfied: bool | None


@dataclass
class ConditionReport:
    conditions: list

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def all_ok(self) -> bool:
        """True when every evaluated condition holds (unevaluated ones are ignored)."""
        return all(c.satisfied is not False for c in self.conditions)

    @property
    def violated(self) -> list:
        return [c.name for c in self.conditions if c.satisfied is False]

    def to_records(self) -> list:
        return [
            {"condition": c.name, "description": c.description, "lhs": c.lhs,
             "rhs": c.rhs, "satisfied": c.satisfied}
            for c in self.conditions
        ]

    def summary(self) -> str:
        lines = []
        for c in self.conditions:
            flag = {True: "ok", False: "VIOLATED", None: "not evaluated"}[c.satisfied]
            lines.append(f"{c.name:8s} {flag:14s} {c.description}: {c.lhs:.6g} vs {c.rhs:.6g}")
        return "\n".join(lines)


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def validate_theorem_conditions(topo: Topology, hp: Hyperparams,
                                kappa: float | None = None) -> ConditionReport:
    """Evaluate the consistency theorem's assumptions at the given finite n.

    Asymptotic statements become finite-n inequalities. The K_n / n^kappa -> 0
    proxy is only judged when ``kappa`` is supplied (as K_n <= n^kappa).
    """
    n, log_n = hp.n, hp.log_n
    conds = []
    if kappa is None:
        conds.append(Condition("th1eq1", "K_n / n^kappa (kappa unset)", float(topo.K_n),
                               math.nan, None))
    else:
        bound = float(n) ** kappa
        conds.append(Condition("th1eq1", f"K_n <= n^kappa, kappa={kappa:g}",
                               float(topo.K_n), bound, topo.K_n <= bound))
    need = _safe_exp(topo.r * log_n + math.log(log_n))
    conds.append(Condition("th1eq2", "K_n >= n^r * log n", float(topo.K_n), need,
                           topo.K_n >= need))
    need_L = theory_inverse_step(n, topo)
    conds.append(Condition("th1eq4", "L_n >= (log n)^(10L+10) * K_n^(3/2)", hp.L_n, need_L,
                           hp.L_n >= need_L))
    tau_max = 1 / (topo.d + 1)
    conds.append(Condition("tau", "0 < tau < 1/(d+1)", hp.tau, tau_max,
                           0 < hp.tau < tau_max))
    conds.append(Condition("width", "r >= 2d", float(topo.r), float(2 * topo.d),
                           topo.r >= 2 * topo.d))
    conds.append(Condition("depth", "L >= 2", float(topo.L), 2.0, topo.L >= 2))
    return ConditionReport(conds)


def init_weights(topo: Topology, hp: Hyperparams, rng) -> WeightVector:
    """Random start: outer weights zero, hidden levels uniform on +-20 d (log n)^2,
    first level uniform on +-n^tau."""
    rng = check_random_state(rng)
    hidden_range = 20 * topo.d * hp.log_n ** 2
    first_range = float(hp.n) ** hp.tau
    layer0 = rng.uniform(-first_range, first_range, size=(topo.K_n, topo.r, topo.d + 1))
    hidden = rng.uniform(-hidden_range, hidden_range,
                         size=(topo.K_n, topo.L - 1, topo.r, topo.r + 1))
    return WeightVector(topo, np.zeros(topo.K_n), layer0, hidden)


def in_cube(X: np.ndarray, half_width: float) -> np.ndarray:
    """Membership in the closed cube [-half_width, half_width]^d, row-wise."""
    return np.all(np.abs(X) <= half_width, axis=1)


def _risk_and_gradient(w: WeightVector, X, y, hp: Hyperparams, need_grad=True):
    """Risk and its gradient as a flat vector (``None`` when ``need_grad`` is false)."""
    topo = w.topology
    mask = in_cube(X, hp.alpha_n)
    n = X.shape[0]
    Xc, yc = X[mask], y[mask]
    sse = 0.0
    outer_sum = w.outer.sum()
    gflat = np.zeros(param_count(topo))
    g = WeightVector.from_flat(topo, gflat, copy=False)
    # small point chunks keep the (K_n, r, chunk) work arrays cache resident
    size = max(8, _GRAD_CHUNK // (topo.K_n * topo.r))
    if Xc.shape[0]:
        size = -(-Xc.shape[0] // -(-Xc.shape[0] // size))   # equal-sized chunks
    for start in range(0, Xc.shape[0], size):
        Xs, ys = Xc[start:start + size], yc[start:start + size]
        acts = _forward_batch(w, Xs)
        resid = 0.5 * (outer_sum + w.outer @ acts.output_t) - ys
        sse += float(resid @ resid)
        if need_grad:
            part = backward(w, Xs, (2.0 / n) * resid, acts=acts)
            g.outer += part.outer
            g.layer0 += part.layer0
            g.hidden += part.hidden
    risk = sse / n + hp.c2 * float(w.outer @ w.outer)
    if not need_grad:
        return risk, None
    g.outer += 2 * hp.c2 * w.outer
    return risk, gflat


class _SaturationCache:
    """Training-time risk and gradient that skips subnetworks with saturated outputs.

    If the output tanh of subnetwork k equals +-1 exactly at every in-cube
    point, every inner partial of k carries the factor 1 - t^2 = 0, so its
    inner weights stay fixed under gradient descent and its outputs can be
    reused. Only its outer weight keeps moving. With ``freeze_all`` every
    subnetwork is treated this way (the inner weights are held fixed anyway).
    """

    def __init__(self, w: WeightVector, X, y, hp: Hyperparams, freeze_all=False):
        self.topo = w.topology
        self.hp = hp
        self.n = X.shape[0]
        mask = in_cube(X, hp.alpha_n)
        self.Xc, self.yc = X[mask], y[mask]
        K, N = self.topo.K_n, self.Xc.shape[0]
        self.live = np.arange(K)
        self.frozen = np.empty(0, dtype=self.live.dtype)
        self.frozen_t = np.empty((0, N))
        if freeze_all:
            t = np.empty((K, N))
            for sl in self._slices(K):
                t[:, sl] = _forward_batch(w, self.Xc[sl]).output_t
            self.live, self.frozen, self.frozen_t = self.frozen, self.live, t

    @staticmethod
    def usable(topo: Topology, n_points: int) -> bool:
        return 0 < topo.K_n * n_points <= _CACHE_ENTRIES

    def _slices(self, K: int):
        N = self.Xc.shape[0]
        size = max(8, _GRAD_CHUNK // (K * self.topo.r))
        size = -(-N // -(-N // size))   # equal-sized chunks
        for start in range(0, N, size):
            yield slice(start, start + size)

    def __call__(self, w: WeightVector):
        topo, n, live, frozen = self.topo, self.n, self.live, self.frozen
        gflat = np.zeros(param_count(topo))
        g = WeightVector.from_flat(topo, gflat, copy=False)
        outer_sum = w.outer.sum()
        resid = 0.5 * (outer_sum + w.outer[frozen] @ self.frozen_t) - self.yc
        if live.size:
            sub = WeightVector(topo.with_subnetworks(live.size), w.outer[live],
                               w.layer0[live], w.hidden[live])
            sub_g = WeightVector.zeros(sub.topology)
            live_t = np.empty((live.size, self.Xc.shape[0]))
            for sl in self._slices(live.size):
                Xs = self.Xc[sl]
                acts = _forward_batch(sub, Xs)
                live_t[:, sl] = acts.output_t
                resid[sl] += 0.5 * (sub.outer @ acts.output_t)
                part = backward(sub, Xs, (2.0 / n) * resid[sl], acts=acts)
                sub_g.outer += part.outer
                sub_g.layer0 += part.layer0
                sub_g.hidden += part.hidden
            g.outer[live] = sub_g.outer
            g.layer0[live] = sub_g.layer0
            g.hidden[live] = sub_g.hidden
        coef = (2.0 / n) * resid
        if frozen.size:
            g.outer[frozen] = 0.5 * (coef.sum() + self.frozen_t @ coef)
        risk = float(resid @ resid) / n + self.hp.c2 * float(w.outer @ w.outer)
        g.outer += 2 * self.hp.c2 * w.outer
        if live.size:
            done = np.all(np.abs(live_t) == 1.0, axis=1)
            if done.any():
                self.frozen = np.concatenate([frozen, live[done]])
                self.frozen_t = np.concatenate([self.frozen_t, live_t[done]])
                self.live = live[~done]
        return risk, gflat


def empirical_risk(w: WeightVector, X, y, hp: Hyperparams) -> float:
    """Penalised empirical L2 risk on the points inside [-alpha_n, alpha_n]^d."""
    X, y = check_dataset(X, y, w.topology.d)
    return _risk_and_gradient(w, X, y, hp, need_grad=False)[0]


def risk_gradient(w: WeightVector, X, y, hp: Hyperparams) -> WeightVector:
    X, y = check_dataset(X, y, w.topology.d)
    return WeightVector.from_flat(w.topology, _risk_and_gradient(w, X, y, hp)[1], copy=False)


@dataclass
class GDTrace:
    """Scalars recorded at every iterate ``w^(t)``, t = 0..t_n.

    ``step_length[t]`` is the norm of the step taken from ``w^(t)``, i.e.
    ``lambda_n * grad_norm[t]``.
    """

    risk: np.ndarray
    grad_norm: np.ndarray
    drift: np.ndarray
    step_length: np.ndarray
    initial: WeightVector
    final: WeightVector
    iterates: list | None = None
    step_size: float = field(default=math.nan)

    def __len__(self):
        return len(self.risk)


def train(X, y, topo: Topology, hp: Hyperparams, rng=None, *, init: WeightVector | None = None,
          n_steps: int | None = None, store_iterates: bool = False,
          outer_only: bool = False) -> tuple:
    """Run plain full-batch gradient descent with constant step 1/L_n.

    ``n_steps`` defaults to ``hp.t_n``. ``outer_only`` freezes the inner weights
    (used to study the outer-weight ridge problem in isolation).
    Returns ``(final_weights, trace)``.
    """
    X, y = check_dataset(X, y, topo.d)
    steps = hp.t_n if n_steps is None else int(n_steps)
    if steps < 0:
        raise ValueError("number of steps must be nonnegative")
    w0 = init_weights(topo, hp, rng) if init is None else init.copy()
    lam = hp.step_size
    flat0 = w0.to_flat()
    flat = flat0.copy()
    w = WeightVector.from_flat(topo, flat, copy=False)

    risk = np.empty(steps + 1)
    grad_norm = np.empty(steps + 1)
    drift = np.empty(steps + 1)
    iterates = [flat0.copy()] if store_iterates else None
    n_outer = topo.K_n
    if _SaturationCache.usable(topo, int(in_cube(X, hp.alpha_n).sum())):
        objective = _SaturationCache(w, X, y, hp, freeze_all=outer_only)
    else:
        def objective(w):
            return _risk_and_gradient(w, X, y, hp)
    for t in range(steps + 1):
        F, gflat = objective(w)
        if outer_only:
            gflat[n_outer:] = 0.0
        if not math.isfinite(F):
            raise TrainingDiverged(t, "risk")
        if not np.isfinite(gflat).all():
            raise TrainingDiverged(t, "gradient")
        risk[t] = F
        grad_norm[t] = math.sqrt(float(gflat @ gflat))
        diff = flat - flat0
        drift[t] = math.sqrt(float(diff @ diff))
        if t == steps:
            break
        # in place, so the views held by ``w`` follow the update
        flat -= lam * gflat
        if store_iterates:
            iterates.append(flat.copy())
    w = WeightVector.from_flat(topo, flat)
    logger.debug("trained %d steps, final risk %.6g", steps, risk[-1])
    trace = GDTrace(risk, grad_norm, drift, lam * grad_norm, w0, w, iterates, lam)
    return w, trace


def truncate(z, beta: float):
    """Clamp to [-beta, beta]."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    out = np.clip(z, -beta, beta)
    return float(out) if np.ndim(out) == 0 else out


def predict(w: WeightVector, hp: Hyperparams, X) -> np.ndarray:
    """Truncated network, set to zero outside [-alpha_n, alpha_n]^d."""
    single = np.ndim(X) == 1
    X = check_points(X, w.topology.d)
    out = truncate(evaluate(w, X), hp.beta_n) * in_cube(X, hp.alpha_n)
    return float(out[0]) if single else out


class OverparamRegressor(RegressorMixin, BaseEstimator):
    """Over-parametrised parallel logistic network trained by gradient descent.

    Parameters
    ----------
    depth : int
        Layers per subnetwork (L >= 2).
    width : int or None
        Neurons per layer; defaults to 2 * n_features.
    n_subnetworks : int
        Number of parallel subnetworks K_n.
    tau : float or None
        Exponent of the first-level initialisation range n^tau; defaults to 0.4/(d+1).
    c1, c2, c3, c4 : float
        Cube half-width factor, ridge weight, truncation factor, step-count factor.
    inverse_step : float or None
        L_n. ``None`` uses the theorem's schedule, which is only feasible for tiny n.
    kappa : float or None
        Exponent used when reporting the K_n / n^kappa condition.
    max_steps : int or None
        Optional hard cap on the number of steps (``None`` runs the full t_n).
    store_iterates : bool
        Keep every iterate in ``trace_`` (memory heavy).
    random_state : int, Generator or None
    """

    def __init__(self, depth=2, width=None, n_subnetworks=512, tau=None, c1=1.0, c2=0.1,
                 c3=1.0, c4=1.0, inverse_step=1000.0, kappa=None, max_steps=None,
                 store_iterates=False, random_state=None):
        self.depth = depth
        self.width = width
        self.n_subnetworks = n_subnetworks
        self.tau = tau
        self.c1 = c1
        self.c2 = c2
        self.c3 = c3
        self.c4 = c4
        self.inverse_step = inverse_step
        self.kappa = kappa
        self.max_steps = max_steps
        self.store_iterates = store_iterates
        self.random_state = random_state

    def _topology(self, d):
        width = 2 * d if self.width is None else self.width
        return Topology(d, self.depth, width, self.n_subnetworks)

    def fit(self, X, y):
        X, y = check_dataset(X, y)
        n, d = X.shape
        self.n_features_in_ = d
        self.topology_ = self._topology(d)
        self.hyperparams_ = schedule(n, self.topology_, tau=self.tau, c1=self.c1, c2=self.c2,
                                     c3=self.c3, c4=self.c4, L_n=self.inverse_step)
        self.conditions_ = validate_theorem_conditions(self.topology_, self.hyperparams_,
                                                       kappa=self.kappa)
        steps = self.hyperparams_.t_n
        if self.max_steps is not None:
            steps = min(steps, int(self.max_steps))
        self.weights_, self.trace_ = train(
            X, y, self.topology_, self.hyperparams_, check_random_state(self.random_state),
            n_steps=steps, store_iterates=self.store_iterates,
        )
        self.n_steps_ = steps
        return self

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_points(X, self.n_features_in_)
        return predict(self.weights_, self.hyperparams_, X)

    def decision_function(self, X):
        """Raw network output before truncation and masking."""
        check_is_fitted(self, "weights_")
        X = check_points(X, self.n_features_in_)
        return evaluate(self.weights_, X)
