"""Numeric checks of the gradient-descent, gradient, covering and ridge bounds.

Exact inequalities (descent inequalities, the PL inequality of the ridge
objective, geometric decay of its gradient descent) are checked as slacks
that must be nonnegative up to a relative tolerance. Bounds with unknown
constants are only evaluated, next to the empirical quantity they bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .estimator import GDTrace, Hyperparams, _risk_and_gradient
from .net import Topology, WeightVector
from .validation import check_dataset, check_random_state

DEFAULT_TOL = 1e-9


def _scale(F0: float) -> float:
    return max(1.0, abs(F0))


@dataclass
class DescentReport:
    """Slacks of the three descent inequalities, indexed by step k = 1..t.

    ``drift[k-1]``   = 2 (k/L) (F_0 - F_k) - ||a_k - a_0||^2
    ``step_sum[s-1]`` = (2/L) (F_0 - F_s) - sum_{k<s} ||a_{k+1} - a_k||^2
    ``descent[k-1]`` = F_{k-1} - ||grad F(a_{k-1})||^2 / (2L) - F_k
    """

    drift: np.ndarray
    step_sum: np.ndarray
    descent: np.ndarray
    tol: float

    @property
    def steps(self) -> int:
        return len(self.descent)

    def _ok(self, slack) -> bool:
        return bool(np.all(slack >= -self.tol))

    @property
    def drift_ok(self) -> bool:
        return self._ok(self.drift)

    @property
    def step_sum_ok(self) -> bool:
        return self._ok(self.step_sum)

    @property
    def descent_ok(self) -> bool:
        return self._ok(self.descent)

    @property
    def passed(self) -> bool:
        return self.drift_ok and self.step_sum_ok and self.descent_ok

    @property
    def worst_slack(self) -> float:
        if self.steps == 0:
            return math.inf
        return float(min(self.drift.min(), self.step_sum.min(), self.descent.min()))

    @property
    def first_violation(self) -> int | None:
        """Smallest step k with a slack below ``-tol``, or None."""
        bad = (self.drift < -self.tol) | (self.step_sum < -self.tol) | (self.descent < -self.tol)
        idx = np.flatnonzero(bad)
        return int(idx[0]) + 1 if idx.size else None

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "drift_ok": self.drift_ok,
            "step_sum_ok": self.step_sum_ok,
            "descent_ok": self.descent_ok,
            "worst_slack": self.worst_slack,
            "first_violation": self.first_violation,
            "passed": self.passed,
        }


def _descent_slacks(risk, grad_sq, drift_sq, step_sq, L: float, tol: float) -> DescentReport:
    risk = np.asarray(risk, dtype=float)
    t = len(risk) - 1
    k = np.arange(1, t + 1)
    gain = risk[0] - risk[1:]
    drift = 2.0 * k / L * gain - np.asarray(drift_sq, dtype=float)[1:]
    step_sum = 2.0 / L * gain - np.cumsum(np.asarray(step_sq, dtype=float)[:t])
    descent = risk[:-1] - np.asarray(grad_sq, dtype=float)[:t] / (2.0 * L) - risk[1:]
    return DescentReport(drift, step_sum, descent, tol * _scale(risk[0]))


def descent_report(iterates, L: float, F, grad, tol: float = DEFAULT_TOL) -> DescentReport:
    """Check the descent inequalities along stored iterates ``a_0..a_t``.

    ``F`` and ``grad`` evaluate the objective and its gradient at an iterate.
    Step lengths and drifts are measured from the iterates themselves.
    """
    if iterates is None or len(iterates) == 0:
        raise ValueError("descent_report needs the stored iterates")
    if not L > 0:
        raise ValueError(f"L must be positive, got {L}")
    a = np.array([np.ravel(np.asarray(x, dtype=float)) for x in iterates])
    risk = np.array([float(F(x)) for x in a])
    grad_sq = np.array([float(np.sum(np.square(grad(x)))) for x in a])
    drift_sq = np.sum(np.square(a - a[0]), axis=1)
    steps = np.diff(a, axis=0)
    step_sq = np.append(np.sum(np.square(steps), axis=1), 0.0)
    return _descent_slacks(risk, grad_sq, drift_sq, step_sq, L, tol)


def trace_descent_report(trace: GDTrace, L: float | None = None,
                         tol: float = DEFAULT_TOL) -> DescentReport:
    """Descent inequalities from the scalars of a training trace.

    Uses the recorded risk, gradient norm, drift and step length, so no
    iterates are needed. ``L`` defaults to the inverse of the trace's step size.
    """
    L = 1.0 / trace.step_size if L is None else L
    g = np.asarray(trace.grad_norm)
    return _descent_slacks(trace.risk, g ** 2, np.asarray(trace.drift) ** 2,
                           np.asarray(trace.step_length) ** 2, L, tol)


@dataclass(frozen=True)
class BoundParams:
    gamma: float
    B: float
    alpha: float
    t_n: float
    L_n: float
    K_n: int
    L: int

    def __post_init__(self):
        for name in ("gamma", "B", "alpha"):
            if not getattr(self, name) >= 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.L_n > 0:
            raise ValueError(f"L_n must be positive, got {self.L_n}")
        if not self.t_n >= self.L_n:
            raise ValueError(f"need t_n >= L_n, got t_n={self.t_n}, L_n={self.L_n}")
        if self.K_n < 1 or self.L < 1:
            raise ValueError("K_n and L must be positive")


def gradient_norm_bound(p: BoundParams, F_v: float, c5: float = 1.0) -> float:
    """c5 K_n^1.5 B^(2L) gamma^2 alpha^2 sqrt(t_n / L_n * max(F_v, 1))."""
    return (c5 * p.K_n ** 1.5 * p.B ** (2 * p.L) * p.gamma ** 2 * p.alpha ** 2
            * math.sqrt(p.t_n / p.L_n * max(F_v, 1.0)))


def lipschitz_bound(p: BoundParams, F_v: float, c7: float = 1.0) -> float:
    """Gradient Lipschitz constant c7 max(sqrt F_v, 1) gamma^2 B^(3L) alpha^3 K_n^1.5 sqrt(t_n/L_n)."""
    return (c7 * max(math.sqrt(max(F_v, 0.0)), 1.0) * p.gamma ** 2 * p.B ** (3 * p.L)
            * p.alpha ** 3 * p.K_n ** 1.5 * math.sqrt(p.t_n / p.L_n))


def bound_params_for(w: WeightVector, hp: Hyperparams) -> BoundParams:
    """Smallest admissible bound parameters for the weights ``w`` under ``hp``."""
    topo = w.topology
    gamma = max(1.0, float(np.max(np.abs(w.outer))))
    B = max(1.0, float(np.max(np.abs(w.hidden))))
    return BoundParams(gamma, B, max(1.0, hp.alpha_n), max(hp.t_n, hp.L_n), hp.L_n, topo.K_n, topo.L)


@dataclass
class LipschitzReport:
    max_ratio: float
    ratios: np.ndarray
    skipped: int

    def to_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "pairs": len(self.ratios), "skipped": self.skipped}


def lipschitz_estimate(pairs, X, y, hp: Hyperparams) -> LipschitzReport:
    """Largest ||grad F_n(w1) - grad F_n(w2)|| / ||w1 - w2|| over the given pairs.

    Coincident pairs are skipped and counted.
    """
    X, y = check_dataset(X, y)
    ratios = []
    skipped = 0
    for w1, w2 in pairs:
        diff = w1.to_flat() - w2.to_flat()
        dist = float(np.linalg.norm(diff))
        if dist == 0.0:
            skipped += 1
            continue
        _, g1 = _risk_and_gradient(w1, X, y, hp)
        _, g2 = _risk_and_gradient(w2, X, y, hp)
        ratios.append(float(np.linalg.norm(g1 - g2)) / dist)
    ratios = np.asarray(ratios)
    max_ratio = float(ratios.max()) if ratios.size else 0.0
    return LipschitzReport(max_ratio, ratios, skipped)


def trajectory_lipschitz(trace: GDTrace, X, y, hp: Hyperparams) -> LipschitzReport:
    """Lipschitz ratios between consecutive stored iterates of a run."""
    if trace.iterates is None:
        raise ValueError("trace has no stored iterates")
    topo = trace.initial.topology
    ws = [WeightVector.from_flat(topo, a) for a in trace.iterates]
    return lipschitz_estimate(zip(ws[:-1], ws[1:]), X, y, hp)


def covering_bound(alpha: float, beta: float, eps: float, p: float, A: float, B: float, C: float,
                   d: int, k: float, L: int, c11: float = 1.0, c12: float = 1.0,
                   c13: float = 1.0) -> tuple:
    """Covering-number bound, returned as ``(value, log_value)``.

    value = (c11 beta^p / eps^p)^(c12 alpha^d B^((L-1)d) A^d (C/eps)^(d/k) + c13),
    computed in log space; ``value`` is ``inf`` when it overflows.
    """
    if not 0 < eps < beta:
        raise ValueError(f"need 0 < eps < beta, got eps={eps}, beta={beta}")
    if min(A, B, C) < 1 or alpha < 1:
        raise ValueError("need alpha, A, B, C >= 1")
    if p < 1 or k <= 0 or d < 1 or L < 1:
        raise ValueError("need p >= 1, k > 0, d >= 1, L >= 1")
    log_exponent_core = (math.log(c12) + d * math.log(alpha) + (L - 1) * d * math.log(B)
                         + d * math.log(A) + d / k * math.log(C / eps))
    exponent = math.exp(log_exponent_core) + c13
    log_value = exponent * (math.log(c11) + p * math.log(beta / eps))
    if log_value < 709.0:
        value = float((c11 * (beta / eps) ** p) ** exponent)
    else:
        value = math.inf
    return value, log_value


def _greedy_count(dist: np.ndarray, eps: float) -> int:
    uncovered = np.ones(dist.shape[0], dtype=bool)
    count = 0
    while uncovered.any():
        i = int(np.argmax(uncovered))
        uncovered &= dist[i] > eps
        count += 1
    return count


def empirical_cover(values, eps: float, p: float = 1.0) -> int:
    """Greedy L_p eps-cover size of a finite family evaluated at fixed points.

    ``values`` has shape (M, n): row j holds one function at the n points.
    A greedy pass picks the first uncovered function as a centre and covers
    every function within empirical L_p distance eps. Since any cover at a
    smaller radius is also an eps-cover, the smallest greedy count over the
    radii at which the greedy result can change (the pairwise distances up to
    eps) is returned. This keeps the count non-increasing in eps and an upper
    bound on the covering number.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] == 0:
        raise ValueError("values must be a nonempty (functions, points) array")
    if not eps >= 0 or p < 1:
        raise ValueError("need eps >= 0 and p >= 1")
    n = values.shape[1]
    dist = cdist(values, values, metric="minkowski", p=p) / n ** (1.0 / p)
    radii = np.unique(dist[dist <= eps])
    best = _greedy_count(dist, eps)
    for radius in radii:
        best = min(best, _greedy_count(dist, radius))
    return best


def sample_bounded_networks(topo: Topology, count: int, A: float, B: float, C: float,
                            rng=None) -> list:
    """Random weight vectors with |level-0| <= A, |hidden| <= B and sum |outer| <= C."""
    rng = check_random_state(rng)
    out = []
    for _ in range(count):
        w = WeightVector.zeros(topo)
        w.layer0[...] = rng.uniform(-A, A, size=w.layer0.shape)
        w.hidden[...] = rng.uniform(-B, B, size=w.hidden.shape)
        raw = rng.uniform(-1.0, 1.0, size=topo.K_n)
        w.outer[...] = C * rng.uniform() * raw / max(np.abs(raw).sum(), 1e-300)
        out.append(w)
    return out


@dataclass
class RidgeProblem:
    """Objective (1/n) ||B a - y||^2 + c2 ||a||^2 over the coefficient vector a."""

    B: np.ndarray
    y: np.ndarray
    c2: float
    _factor: tuple | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.y = np.ravel(np.asarray(self.y, dtype=float))
        if self.B.shape[0] != self.y.shape[0]:
            raise ValueError(f"B has {self.B.shape[0]} rows but y has {self.y.shape[0]} entries")
        if self.B.shape[0] < 1 or self.B.shape[1] < 1:
            raise ValueError("B must have at least one row and one column")
        if not (np.isfinite(self.B).all() and np.isfinite(self.y).all()):
            raise ValueError("B and y must be finite")
        if not self.c2 > 0:
            raise ValueError(f"c2 must be positive, got {self.c2}")

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def K(self) -> int:
        return self.B.shape[1]

    @property
    def A(self) -> np.ndarray:
        return self.B.T @ self.B / self.n + self.c2 * np.eye(self.K)

    @property
    def rhs(self) -> np.ndarray:
        return self.B.T @ self.y / self.n

    def factor(self):
        if self._factor is None:
            self._factor = cho_factor(self.A)
        return self._factor

    def _coef(self, a) -> np.ndarray:
        a = np.ravel(np.asarray(a, dtype=float))
        if a.shape[0] != self.K:
            raise ValueError(f"a has {a.shape[0]} entries, expected {self.K}")
        return a


def ridge_objective(a, prob: RidgeProblem) -> float:
    a = prob._coef(a)
    res = prob.B @ a - prob.y
    return float(res @ res / prob.n + prob.c2 * (a @ a))


def ridge_gradient(a, prob: RidgeProblem) -> np.ndarray:
    """2 A a - (2/n) B^T y."""
    a = prob._coef(a)
    return 2.0 * (prob.A @ a) - 2.0 * prob.rhs


def ridge_optimum(prob: RidgeProblem) -> tuple:
    """``(a_opt, F_opt)`` from a Cholesky solve of A a = B^T y / n."""
    a_opt = cho_solve(prob.factor(), prob.rhs)
    return a_opt, ridge_objective(a_opt, prob)


def pl_slack(a, prob: RidgeProblem, F_opt: float | None = None) -> float:
    """||grad F(a)||^2 - 4 c2 (F(a) - F_opt); nonnegative for every a."""
    if F_opt is None:
        F_opt = ridge_optimum(prob)[1]
    g = ridge_gradient(a, prob)
    return float(g @ g) - 4.0 * prob.c2 * (ridge_objective(a, prob) - F_opt)


@dataclass
class ConvergenceReport:
    gap: np.ndarray
    envelope: np.ndarray
    rate: float
    precondition_ok: bool
    lambda_max: float
    tol: float

    @property
    def slack(self) -> np.ndarray:
        return self.envelope - self.gap

    @property
    def passed(self) -> bool:
        return self.precondition_ok and bool(np.all(self.slack >= -self.tol))

    @property
    def worst_slack(self) -> float:
        return float(self.slack.min())

    def to_dict(self) -> dict:
        return {
            "steps": len(self.gap) - 1,
            "rate": self.rate,
            "lambda_max_2A": self.lambda_max,
            "precondition_ok": self.precondition_ok,
            "worst_slack": self.worst_slack,
            "passed": self.passed,
        }


def outer_gd_convergence(prob: RidgeProblem, a0, L_n: float, steps: int,
                         tol: float = DEFAULT_TOL) -> ConvergenceReport:
    """Gradient descent with step 1/L_n against the envelope (1 - 2 c2/L_n)^t (F_0 - F_opt).

    The envelope is only guaranteed when L_n >= lambda_max(2A) (which implies
    c2 <= L_n / 2); ``precondition_ok`` records whether that holds and a run
    with a violated precondition never counts as passed.
    """
    a = prob._coef(a0).copy()
    lam_max = float(np.linalg.eigvalsh(2.0 * prob.A)[-1])
    ok = L_n >= lam_max and prob.c2 <= L_n / 2
    a_opt, F_opt = ridge_optimum(prob)
    rate = 1.0 - 2.0 * prob.c2 / L_n
    gap = np.empty(steps + 1)
    gap[0] = ridge_objective(a, prob) - F_opt
    for t in range(1, steps + 1):
        a -= ridge_gradient(a, prob) / L_n
        gap[t] = ridge_objective(a, prob) - F_opt
    envelope = gap[0] * rate ** np.arange(steps + 1)
    return ConvergenceReport(gap, envelope, rate, ok, lam_max,
                             tol * _scale(gap[0] + F_opt))


def random_ridge_problem(rng, K_max: int = 10, n_max: int = 50, c2_range=(0.01, 10.0)) -> RidgeProblem:
    """Random problem with K <= K_max, n <= n_max and c2 log-uniform on ``c2_range``."""
    rng = check_random_state(rng)
    K = int(rng.integers(1, K_max + 1))
    n = int(rng.integers(1, n_max + 1))
    lo, hi = c2_range
    c2 = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
    return RidgeProblem(rng.normal(size=(n, K)), rng.normal(size=n), c2)
