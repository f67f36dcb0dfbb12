"""Synthetic regression data, Monte-Carlo L2 error and the consistency curve."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import (ConditionReport, TrainingDiverged, predict, schedule, train,
                        validate_theorem_conditions)
from .net import Topology
from .theory import trace_descent_report
from .validation import check_points, check_random_state

logger = logging.getLogger(__name__)

CLIP = 2.0


def _clipped(X):
    return np.clip(X, -CLIP, CLIP)


def _zero(X):
    return np.zeros(X.shape[0])


def _affine(X):
    d = X.shape[1]
    return 0.5 + _clipped(X) @ (np.arange(1, d + 1) / d) / 2


def _sin_product(X):
    return np.prod(np.sin(2.0 * _clipped(X)), axis=1)


def _clipped_quadratic(X):
    return np.mean(_clipped(X) ** 2, axis=1) - 1.0


# name -> (function, Lipschitz constant for d = 1, sup norm)
TARGETS = {
    "zero": (_zero, 0.0, 0.0),
    "affine": (_affine, 0.5, 1.5),
    "sin_product": (_sin_product, 2.0, 1.0),
    "clipped_quadratic": (_clipped_quadratic, 4.0, 3.0),
}

DISTRIBUTIONS = ("uniform", "gaussian", "mixture")


def target_function(name: str):
    try:
        return TARGETS[name][0]
    except KeyError:
        raise ValueError(f"unknown target {name!r}; choose from {sorted(TARGETS)}") from None


@dataclass(frozen=True)
class DataSpec:
    """Regression model Y = m(X) + sigma * N(0, 1).

    ``uniform`` draws X on [-half_width, half_width]^d, ``gaussian`` from
    N(0, I), ``mixture`` from an equal mixture of N(-1, 0.25 I) and N(+1, 0.25 I).
    """

    target: str = "sin_product"
    distribution: str = "uniform"
    noise_sigma: float = 0.2
    d: int = 1
    half_width: float = 2.0

    def __post_init__(self):
        target_function(self.target)
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}; choose from {DISTRIBUTIONS}")
        if not self.noise_sigma >= 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def m(self):
        return target_function(self.target)

    def sample_x(self, N: int, rng) -> np.ndarray:
        rng = check_random_state(rng)
        if self.distribution == "uniform":
            return rng.uniform(-self.half_width, self.half_width, size=(N, self.d))
        if self.distribution == "gaussian":
            return rng.standard_normal((N, self.d))
        centre = np.where(rng.random(N) < 0.5, -1.0, 1.0)
        return centre[:, None] + 0.5 * rng.standard_normal((N, self.d))

    def to_dict(self) -> dict:
        return {"target": self.target, "distribution": self.distribution,
                "noise_sigma": self.noise_sigma, "d": self.d, "half_width": self.half_width}


def generate_dataset(spec: DataSpec, n: int, rng=None) -> tuple:
    """``n`` i.i.d. pairs; returns ``(X, y)``."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    rng = check_random_state(rng)
    X = spec.sample_x(int(n), rng)
    y = spec.m(X)
    if spec.noise_sigma > 0:
        y = y + spec.noise_sigma * rng.standard_normal(int(n))
    return X, y


def l2_error_mc(predictor, m_true, x_sampler, N: int, rng=None, *, with_se: bool = False):
    """Monte-Carlo estimate of the mean of (predictor(X) - m_true(X))^2.

    ``x_sampler(N, rng)`` draws the points. With ``with_se`` the standard error
    is returned too, as ``(estimate, se)``.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    rng = check_random_state(rng)
    X = check_points(x_sampler(int(N), rng))
    sq = (np.asarray(predictor(X), dtype=float) - np.asarray(m_true(X), dtype=float)) ** 2
    est = float(np.mean(sq))
    if not with_se:
        return est
    se = float(np.std(sq, ddof=1) / math.sqrt(N)) if N > 1 else math.inf
    return est, se


@dataclass(frozen=True)
class Constants:
    tau: float | None = None
    c1: float = 1.0
    c2: float = 0.1
    c3: float = 1.0
    c4: float = 1.0
    L_n: float | None = 1000.0

    def to_dict(self) -> dict:
        return {"tau": self.tau, "c1": self.c1, "c2": self.c2, "c3": self.c3, "c4": self.c4,
                "L_n": self.L_n}


@dataclass(frozen=True)
class CurveRow:
    n: int
    replicates: int
    median_l2: float
    q25: float
    q75: float
    mean_final_risk: float
    conditions_ok: bool

    def to_dict(self) -> dict:
        return {"n": self.n, "replicates": self.replicates, "median_l2": self.median_l2,
                "q25": self.q25, "q75": self.q75, "mean_final_risk": self.mean_final_risk,
                "conditions_ok": self.conditions_ok}


@dataclass
class RunResult:
    n: int
    replicate: int
    l2_error: float
    final_risk: float
    steps: int
    risk_monotone: bool
    descent_ok: bool
    descent_worst_slack: float


@dataclass
class CurveResult:
    rows: list
    conditions: dict = field(default_factory=dict)
    runs: list = field(default_factory=list)

    def records(self) -> list:
        return [row.to_dict() for row in self.rows]

    def violated(self) -> dict:
        """For every n, the names of the conditions that fail."""
        return {n: rep.violated for n, rep in self.conditions.items()}


class RunFailed(RuntimeError):
    def __init__(self, n: int, replicate: int, cause: Exception):
        super().__init__(f"run n={n} replicate={replicate} failed: {cause}")
        self.n = n
        self.replicate = replicate


def run_seeds(master_seed: int, n: int, replicate: int) -> list:
    """Independent generators for data, initialisation and Monte Carlo of one run.

    They depend only on (master_seed, n, replicate), so any subset of the
    grid reproduces exactly.
    """
    ss = np.random.SeedSequence([int(master_seed), int(n), int(replicate)])
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def single_run(topo: Topology, constants: Constants, data: DataSpec, n: int, replicate: int,
               mc_points: int, master_seed: int, max_steps: int | None = None) -> RunResult:
    data_rng, init_rng, mc_rng = run_seeds(master_seed, n, replicate)
    X, y = generate_dataset(data, n, data_rng)
    hp = schedule(n, topo, **constants.to_dict())
    steps = hp.t_n if max_steps is None else min(hp.t_n, int(max_steps))
    try:
        w, trace = train(X, y, topo, hp, init_rng, n_steps=steps)
    except TrainingDiverged as exc:
        raise RunFailed(n, replicate, exc) from exc
    err = l2_error_mc(lambda Z: predict(w, hp, Z), data.m, data.sample_x, mc_points, mc_rng)
    mono = bool(np.all(np.diff(trace.risk) <= 1e-12 * max(1.0, trace.risk[0])))
    descent = trace_descent_report(trace)
    logger.info("n=%d rep=%d l2=%.6g risk=%.6g", n, replicate, err, trace.risk[-1])
    return RunResult(n, replicate, err, float(trace.risk[-1]), steps, mono,
                     descent.passed, descent.worst_slack)


def consistency_curve(topo: Topology, constants: Constants, data: DataSpec, n_values,
                      replicates: int = 10, mc_points: int = 100_000, master_seed: int = 0,
                      kappa: float | None = None, max_steps: int | None = None,
                      n_jobs: int = 1) -> CurveResult:
    """Train ``replicates`` independent estimators per n and summarise their L2 errors."""
    if data.d != topo.d:
        raise ValueError(f"data dimension {data.d} differs from topology dimension {topo.d}")
    n_values = sorted({int(n) for n in n_values})
    if not n_values or n_values[0] < 2:
        raise ValueError("n_values must be nonempty with every n >= 2")
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")
    jobs = [(n, rep) for n in n_values for rep in range(replicates)]
    args = (mc_points, master_seed, max_steps)
    if n_jobs == 1:
        runs = [single_run(topo, constants, data, n, rep, *args) for n, rep in jobs]
    else:
        from joblib import Parallel, delayed

        runs = Parallel(n_jobs=n_jobs)(
            delayed(single_run)(topo, constants, data, n, rep, *args) for n, rep in jobs
        )
    runs.sort(key=lambda r: (r.n, r.replicate))
    rows = []
    conditions = {}
    for n in n_values:
        errs = np.array([r.l2_error for r in runs if r.n == n])
        risks = np.array([r.final_risk for r in runs if r.n == n])
        hp = schedule(n, topo, **constants.to_dict())
        report: ConditionReport = validate_theorem_conditions(topo, hp, kappa=kappa)
        conditions[n] = report
        q25, med, q75 = np.quantile(errs, [0.25, 0.5, 0.75])
        rows.append(CurveRow(n, len(errs), float(med), float(q25), float(q75),
                             float(risks.mean()), report.all_ok))
    return CurveResult(rows, conditions, runs)


def count_inversions(values) -> int:
    """Number of consecutive increases in a sequence."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(np.diff(v) > 0))
