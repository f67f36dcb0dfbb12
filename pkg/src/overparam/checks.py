"""Randomised verification suites behind ``overparam verify``.

Each suite returns a ``CheckResult`` with a pass flag, a summary dict and one
record per instance. The oracles (finite differences, brute-force strip
masses, closed-form ridge optimum) are computed independently of the code
under test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constructions import (CubeSpec, GridSpec, boundary_strips, indicator_network,
                            lemma7_grid, perturb, piecewise_constant_network,
                            shifted_grid_network, strip_masses)
from .estimator import (Hyperparams, empirical_risk, in_cube, risk_gradient, schedule,
                        train)
from .experiments import DataSpec, generate_dataset, l2_error_mc, target_function
from .net import Topology, WeightVector, evaluate, network_gradient, subnetwork_outputs
from .theory import (DEFAULT_TOL, RidgeProblem, covering_bound, empirical_cover,
                     outer_gd_convergence, pl_slack, random_ridge_problem, ridge_objective,
                     ridge_optimum, sample_bounded_networks, trace_descent_report,
                     trajectory_lipschitz)
from .validation import check_random_state


@dataclass
class CheckResult:
    name: str
    passed: bool
    summary: dict
    records: list = field(default_factory=list)

    def lines(self) -> list:
        status = "PASS" if self.passed else "FAIL"
        out = [f"{self.name}: {status}"]
        out += [f"  {k}: {v}" for k, v in self.summary.items()]
        return out


# finite differences -------------------------------------------------------

FD_STEP = 1e-5
FD_REL = 1e-6
FD_ABS = 1e-8


def central_difference(fun, flat: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of a scalar function of a flat vector."""
    out = np.empty_like(flat)
    x = flat.copy()
    for i in range(flat.size):
        x[i] = flat[i] + h
        up = fun(x)
        x[i] = flat[i] - h
        down = fun(x)
        x[i] = flat[i]
        out[i] = (up - down) / (2 * h)
    return out


def gradient_mismatch(analytic: np.ndarray, numeric: np.ndarray) -> tuple:
    """``(ok, worst relative error, worst absolute error)``.

    An entry passes when its relative error is below ``FD_REL`` or its
    absolute error below ``FD_ABS``. The relative error is reported over
    entries large enough (``|numeric| >= FD_ABS / FD_REL``) for it to be
    meaningful.
    """
    diff = np.abs(analytic - numeric)
    rel = diff / np.maximum(np.abs(numeric), 1e-300)
    good = (rel < FD_REL) | (diff < FD_ABS)
    sizeable = np.abs(numeric) >= FD_ABS / FD_REL
    worst_rel = float(np.max(rel[sizeable], initial=0.0))
    return bool(good.all()), worst_rel, float(np.max(diff, initial=0.0))


def random_instance(rng, d_max=3, L_max=3, r_max=4, K_max=8, scale=3.0):
    """Random topology and weights with entries in [-scale, scale].

    The width is drawn from [2d, max(2d, r_max)], so r >= 2d always holds.
    """
    d = int(rng.integers(1, d_max + 1))
    L = int(rng.integers(2, L_max + 1))
    r = int(rng.integers(2 * d, max(2 * d, r_max) + 1))
    K = int(rng.integers(1, K_max + 1))
    topo = Topology(d, L, r, K)
    flat = rng.uniform(-scale, scale, size=WeightVector.zeros(topo).to_flat().size)
    return topo, WeightVector.from_flat(topo, flat)


def gradient_suite(instances: int = 100, seed=0, n_points: int = 6) -> CheckResult:
    """Analytic network and risk gradients against central differences."""
    rng = check_random_state(seed)
    records = []
    for i in range(instances):
        topo, w = random_instance(rng)
        x = rng.uniform(-3, 3, size=topo.d)
        flat = w.to_flat()

        def f_at(v):
            return float(evaluate(WeightVector.from_flat(topo, v, copy=False), x[None])[0])

        ok_net, rel_net, abs_net = gradient_mismatch(network_gradient(topo, w, x).to_flat(),
                                            central_difference(f_at, flat))
        X = rng.uniform(-2, 2, size=(n_points, topo.d))
        y = rng.normal(size=n_points)
        hp = schedule(n_points, topo, L_n=1000.0)

        def F_at(v):
            return empirical_risk(WeightVector.from_flat(topo, v, copy=False), X, y, hp)

        ok_risk, rel_risk, abs_risk = gradient_mismatch(risk_gradient(w, X, y, hp).to_flat(),
                                              central_difference(F_at, flat))
        records.append({"instance": i, "d": topo.d, "L": topo.L, "r": topo.r, "K_n": topo.K_n,
                        "network_ok": ok_net, "network_rel": rel_net, "network_abs": abs_net,
                        "risk_ok": ok_risk, "risk_rel": rel_risk, "risk_abs": abs_risk})
    passed = all(r["network_ok"] and r["risk_ok"] for r in records)
    summary = {
        "instances": instances,
        "worst_network_rel": max((r["network_rel"] for r in records), default=0.0),
        "worst_risk_rel": max((r["risk_rel"] for r in records), default=0.0),
        "worst_abs": max((max(r["network_abs"], r["risk_abs"]) for r in records), default=0.0),
        "failures": sum(not (r["network_ok"] and r["risk_ok"]) for r in records),
    }
    return CheckResult("grad", passed, summary, records)


# ridge / PL -------------------------------------------------------------------

def closed_form_ridge_value(prob: RidgeProblem) -> float:
    """(1/n) y^T y - rhs^T A^{-1} rhs, with A^{-1} rhs from a dense LU solve."""
    rhs = prob.rhs
    return float(prob.y @ prob.y / prob.n - rhs @ np.linalg.solve(prob.A, rhs))


def pl_suite(instances: int = 1000, seed=0, tol: float = DEFAULT_TOL) -> CheckResult:
    rng = check_random_state(seed)
    records = []
    for i in range(instances):
        prob = random_ridge_problem(rng)
        a = rng.normal(scale=float(rng.uniform(0.1, 10.0)), size=prob.K)
        a_opt, F_opt = ridge_optimum(prob)
        F = ridge_objective(a, prob)
        slack = pl_slack(a, prob, F_opt)
        oracle_gap = abs(F_opt - closed_form_ridge_value(prob))
        records.append({"instance": i, "K": prob.K, "n": prob.n, "c2": prob.c2, "F": F,
                        "F_opt": F_opt, "slack": slack, "scaled_slack": slack / max(1.0, F),
                        "oracle_gap": oracle_gap})
    passed = all(r["scaled_slack"] >= -tol and r["oracle_gap"] <= 1e-8 * max(1.0, abs(r["F_opt"]))
                 for r in records)
    summary = {
        "instances": instances,
        "min_scaled_slack": min((r["scaled_slack"] for r in records), default=math.inf),
        "max_oracle_gap": max((r["oracle_gap"] for r in records), default=0.0),
    }
    return CheckResult("lemma8-pl", passed, summary, records)


def decay_suite(problems: int = 100, steps: int = 200, seed=0,
                tol: float = DEFAULT_TOL) -> CheckResult:
    """Ridge gradient descent against the geometric envelope, L_n >= lambda_max(2A)."""
    rng = check_random_state(seed)
    records = []
    for i in range(problems):
        prob = random_ridge_problem(rng)
        lam = float(np.linalg.eigvalsh(2.0 * prob.A)[-1])
        L_n = lam * float(rng.uniform(1.0, 3.0))
        a0 = rng.normal(scale=3.0, size=prob.K)
        rep = outer_gd_convergence(prob, a0, L_n, steps, tol)
        records.append({"problem": i, "K": prob.K, "n": prob.n, "c2": prob.c2, "L_n": L_n,
                        "rate": rep.rate, "worst_slack": rep.worst_slack, "passed": rep.passed})
    passed = all(r["passed"] for r in records)
    summary = {"problems": problems, "steps": steps,
               "worst_slack": min((r["worst_slack"] for r in records), default=math.inf),
               "failures": sum(not r["passed"] for r in records)}
    return CheckResult("lemma8-decay", passed, summary, records)


# descent inequalities on training runs -----------------------------------------

def lemma1_suite(seed=0, runs: int = 3, n: int = 20, K_n: int = 32, L_n: float = 1000.0,
                 tol: float = DEFAULT_TOL) -> CheckResult:
    """Descent inequalities on full-network and outer-only desk-mode runs.

    Full runs are judged only when L_n exceeds the largest gradient-difference
    ratio measured between consecutive iterates; outer-only runs when L_n
    exceeds lambda_max(2A) of the frozen features. Other runs are reported.
    """
    rng = check_random_state(seed)
    topo = Topology(1, 2, 2, K_n)
    data = DataSpec("sin_product", "uniform", 0.2, 1)
    records = []
    for i in range(runs):
        X, y = generate_dataset(data, n, rng)
        hp = schedule(n, topo, L_n=L_n)
        w, trace = train(X, y, topo, hp, rng, store_iterates=True)
        lip = trajectory_lipschitz(trace, X, y, hp).max_ratio
        rep = trace_descent_report(trace, tol=tol)
        records.append(_lemma1_record("full", i, L_n, lip, rep))

        w0 = trace.initial
        _, trace_o = train(X, y, topo, hp, init=_random_outer(w0, rng), outer_only=True)
        B = subnetwork_outputs(w0, X) * in_cube(X, hp.alpha_n)[:, None]
        prob = RidgeProblem(B, y, hp.c2)
        lam = float(np.linalg.eigvalsh(2.0 * prob.A)[-1])
        rep_o = trace_descent_report(trace_o, tol=tol)
        records.append(_lemma1_record("outer-only", i, L_n, lam, rep_o))
    judged = [r for r in records if r["applicable"]]
    passed = all(r["passed"] for r in judged)
    summary = {"runs": len(records), "judged": len(judged),
               "violations_reported": sum(not r["passed"] for r in records if not r["applicable"]),
               "worst_slack": min((r["worst_slack"] for r in records), default=math.inf)}
    return CheckResult("lemma1", passed, summary, records)


def _random_outer(w: WeightVector, rng) -> WeightVector:
    out = w.copy()
    out.outer[:] = rng.uniform(-1, 1, size=out.outer.shape)
    return out


def _lemma1_record(kind, i, L_n, lip, rep) -> dict:
    return {"kind": kind, "run": i, "L_n": L_n, "smoothness": lip, "applicable": L_n >= lip,
            "steps": rep.steps, "worst_slack": rep.worst_slack,
            "first_violation": rep.first_violation, "passed": rep.passed}


# constructions ----------------------------------------------------------------

def lemma5_suite(seed=0, perturbations: int = 50, points: int = 1000) -> CheckResult:
    """Indicator sandwich for d in {1,2}, n in {100, 1000}, delta in {0.05, 0.1}, L in {2,3}."""
    rng = check_random_state(seed)
    records = []
    for d in (1, 2):
        for L in (2, 3):
            topo = Topology(d, L, 2 * d, 1)
            for n in (100, 1000):
                lg = math.log(n)
                strict = n >= max(8 * d, math.exp(topo.r + 1))
                for delta in (0.05, 0.1):
                    u = rng.uniform(-0.5 * lg, 0.0, size=d)
                    v = u + rng.uniform(4 * delta, 0.5 * lg, size=d)
                    cube = CubeSpec(u, v, delta)
                    w = indicator_network(topo, cube, n, strict=strict)
                    X = _sandwich_points(cube, lg, points, rng)
                    inner, outer = cube.inner_mask(X), cube.outer_mask(X)
                    worst_in, worst_out = 1.0, 0.0
                    for p in range(perturbations + 1):
                        wp = w if p == 0 else perturb(w, lg, rng)
                        f = evaluate(wp, X)
                        worst_in = min(worst_in, float(f[inner].min(initial=1.0)))
                        worst_out = max(worst_out, float(f[outer].max(initial=0.0)))
                    ok = worst_in >= 1 - 1 / n and worst_out <= 1 / n
                    records.append({"d": d, "L": L, "n": n, "delta": delta,
                                    "preconditions_met": strict, "points": len(X),
                                    "inside": int(inner.sum()), "outside": int(outer.sum()),
                                    "min_inside": worst_in, "max_outside": worst_out,
                                    "passed": ok})
    passed = all(r["passed"] for r in records)
    summary = {"instances": len(records), "perturbations": perturbations,
               "min_inside_margin": min(r["min_inside"] - 1 + 1 / r["n"] for r in records),
               "min_outside_margin": min(1 / r["n"] - r["max_outside"] for r in records)}
    return CheckResult("lemma5", passed, summary, records)


def _sandwich_points(cube: CubeSpec, half_width: float, count: int, rng) -> np.ndarray:
    """Regular grid on [-half_width, half_width]^d plus points near the cube faces."""
    d = cube.u.shape[0]
    per_axis = int(math.ceil(count ** (1.0 / d)))
    axis = np.linspace(-half_width, half_width, per_axis)
    grid = np.stack(np.meshgrid(*[axis] * d, indexing="ij"), -1).reshape(-1, d)
    near = rng.uniform(cube.u - 2 * cube.delta, cube.v + 2 * cube.delta, size=(count, d))
    return np.vstack([grid, near])


LEMMA6_ANCHOR = -1.7
LEMMA6_WIDTH = 2.8


def lemma6_suite(seed=0, n: int = 1000, C_check: float = 10.0, points: int = 20000,
                 target: str = "sin_product") -> CheckResult:
    """Boundedness and off-strip error of grid approximants, K <= 4, d <= 2."""
    rng = check_random_state(seed)
    m = target_function(target)
    records = []
    for d in (1, 2):
        c_lip = 2.0 * math.sqrt(d)
        for K in (1, 2, 3, 4):
            for delta in (0.05, min(1.0, LEMMA6_WIDTH / K)):
                rec = _lemma6_instance(m, d, K, n, delta, c_lip, C_check, points, rng)
                rec["kind"] = "bound"
                records.append(rec)
        chain = [_lemma6_instance(m, d, K, n * K, 0.05, c_lip, C_check, points, rng)
                 for K in (1, 2, 4)]
        errs = [c["error"] for c in chain]
        records.append({"kind": "trend", "d": d, "K": [1, 2, 4], "n": [n, 2 * n, 4 * n],
                        "errors": errs, "passed": all(b < a for a, b in zip(errs, errs[1:]))})
    passed = all(r["passed"] for r in records)
    summary = {"instances": sum(r["kind"] == "bound" for r in records),
               "max_sup_ratio": max(r["sup_ratio"] for r in records if r["kind"] == "bound"),
               "max_error_ratio": max(r["error_ratio"] for r in records if r["kind"] == "bound"),
               "trends_decreasing": all(r["passed"] for r in records if r["kind"] == "trend")}
    return CheckResult("lemma6", passed, summary, records)


def _lemma6_instance(m, d, K, n, delta, c_lip, C_check, points, rng) -> dict:
    topo = Topology(d, 2, 2 * d, K ** d)
    a = np.full(d, LEMMA6_ANCHOR)
    grid = GridSpec(a, LEMMA6_WIDTH, K, delta)
    w = piecewise_constant_network(m, grid, n, topo)
    lg = math.log(n)
    wide = rng.uniform(-lg, lg, size=(points, d))
    inside = rng.uniform(a, a + LEMMA6_WIDTH, size=(points, d))
    m_sup = max(float(np.max(np.abs(m(wide)))), float(np.max(np.abs(m(grid.centers())))))
    sup_f = float(np.max(np.abs(evaluate(w, np.vstack([wide, inside])))))
    sup_bound = m_sup * (3 ** d + K ** d / n)
    off = ~boundary_strips(grid)(inside)
    err = float(np.max(np.abs(evaluate(w, inside[off]) - m(inside[off])), initial=0.0))
    err_bound = C_check * (c_lip * LEMMA6_WIDTH / K + K ** d / n)
    return {"d": d, "K": K, "n": n, "delta": delta, "sup": sup_f, "sup_bound": sup_bound,
            "sup_ratio": sup_f / sup_bound if sup_bound > 0 else 0.0, "error": err,
            "error_bound": err_bound, "error_ratio": err / err_bound,
            "off_strip_points": int(off.sum()),
            "passed": sup_f <= sup_bound and err <= err_bound}


def modular_strip_masses(sample, K: int) -> np.ndarray:
    """Strip masses by modular arithmetic, for samples inside every shifted grid.

    A point is within 1/K^2 of a face of the grid shifted by k*2/K^2 exactly
    when its offset from the grid origin, reduced modulo the side 2/K, lies
    within 1/K^2 of 0 or of 2/K.
    """
    sample = np.asarray(sample, dtype=float)
    d = sample.shape[1]
    side = 2.0 / K
    out = np.empty((d, K))
    for k in range(K):
        origin = -K - 2.0 / K + k * 2.0 / K ** 2
        rem = np.mod(sample - origin, side)
        near = np.minimum(rem, side - rem) < 1.0 / K ** 2
        out[:, k] = near.mean(axis=0)
    return out


def lemma7_suite(seed=0, n: int = 10_000, mc_points: int = 100_000,
                 target: str = "sin_product") -> CheckResult:
    """Shifted-grid structure, shift selection and the K=2 to K=3 error drop (d = 1)."""
    rng = check_random_state(seed)
    m = target_function(target)
    topo = Topology(1, 2, 2, 1000)
    records = []
    errors = {}
    for K in (2, 3):
        sample = rng.uniform(-2, 2, size=(n, 1))
        w, info = shifted_grid_network(m, K, n, sample, topo)
        active = int(np.count_nonzero(np.any(w.layer0 != 0, axis=(1, 2))))
        expected = (K * K + 1) ** 3
        cap = info.m_sup / info.repetitions
        brute = modular_strip_masses(sample, K)
        chosen = float(info.selection.selected_mass.max())
        err = l2_error_mc(lambda Z: evaluate(w, Z), m, lambda N, r: r.uniform(-2, 2, size=(N, 1)),
                          mc_points, check_random_state(int(rng.integers(2 ** 31))))
        errors[K] = err
        ok = (active == expected and float(np.max(np.abs(w.outer))) <= cap * (1 + 1e-12)
              and np.allclose(info.selection.masses, brute, rtol=0, atol=2.0 / n)
              and chosen <= 1.0 / K
              and np.allclose(info.selection.selected_mass, brute.min(axis=1), rtol=0,
                              atol=2.0 / n))
        records.append({"K": K, "active": active, "expected_active": expected,
                        "max_outer": float(np.max(np.abs(w.outer))), "outer_cap": cap,
                        "selected_mass": chosen, "brute_force_min": float(brute.min()),
                        "l2_error": err, "passed": bool(ok)})
    zero_w, _ = shifted_grid_network(target_function("zero"), 2, n,
                                     rng.uniform(-2, 2, size=(100, 1)), topo)
    zero_ok = not np.any(evaluate(zero_w, np.linspace(-3, 3, 101)[:, None]))
    decreasing = errors[3] < errors[2]
    passed = all(r["passed"] for r in records) and decreasing and zero_ok
    summary = {"l2_error_K2": errors[2], "l2_error_K3": errors[3], "decreasing": decreasing,
               "zero_target_zero_network": zero_ok,
               "structure_ok": all(r["passed"] for r in records)}
    return CheckResult("lemma7", passed, summary, records)


def select_shift_bruteforce(sample, K: int) -> np.ndarray:
    """Per-axis minimum strip mass by exhaustive evaluation of every shift."""
    return strip_masses(sample, K).min(axis=1)


# covering -------------------------------------------------------------------

def covering_suite(seed=0, networks: int = 100, points: int = 20, c11: float = 1.0,
                   c12: float = 1.0, c13: float = 1.0) -> CheckResult:
    rng = check_random_state(seed)
    example, _ = covering_bound(1, 1, 0.5, 2, 1, 1, 1, 1, 1, 2)
    example_ok = example == 64.0
    topo = Topology(1, 2, 2, 4)
    alpha, beta, A, B, C, p, k = 2.0, 1.0, 2.0, 2.0, 1.0, 1.0, 1.0
    X = rng.uniform(-alpha, alpha, size=(points, 1))
    nets = sample_bounded_networks(topo, networks, A, B, C, rng)
    values = np.array([np.clip(evaluate(w, X), -beta, beta) for w in nets])
    eps_grid = [0.05, 0.1, 0.2, 0.4, 0.8]
    counts = [empirical_cover(values, e, p) for e in eps_grid]
    monotone = all(b <= a for a, b in zip(counts, counts[1:]))
    singleton_ok = empirical_cover(values[:1], 0.1, p) == 1
    records = []
    for e, c in zip(eps_grid, counts):
        bound, log_bound = covering_bound(alpha, beta, e, p, A, B, C, 1, k, topo.L, c11, c12, c13)
        records.append({"eps": e, "greedy": c, "bound": bound, "log_bound": log_bound,
                        "passed": c <= bound})
    passed = example_ok and monotone and singleton_ok and all(r["passed"] for r in records)
    summary = {"example_value": example, "monotone_in_eps": monotone,
               "singleton_count_one": singleton_ok, "greedy_counts": counts,
               "networks": networks}
    return CheckResult("covering", passed, summary, records)


SUITES = {
    "grad": gradient_suite,
    "lemma1": lemma1_suite,
    "lemma5": lemma5_suite,
    "lemma6": lemma6_suite,
    "lemma7": lemma7_suite,
    "covering": covering_suite,
}
