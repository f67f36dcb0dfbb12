"""Command-line entry point: ``overparam <command> ...``.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import checks
from .config import Config, ConfigError, load_config
from .estimator import predict, schedule, train, validate_theorem_conditions
from .experiments import consistency_curve, count_inversions, generate_dataset
from .io import load_weights, results_text, save_weights, write_results
from .theory import trace_descent_report

SEED_ENV = "OVERPARAM_SEED"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2

logger = logging.getLogger("overparam")


class UsageError(Exception):
    pass


def resolve_seed(flag: int | None, config: Config | None = None) -> int:
    """Seed from the flag, else the config, else $OVERPARAM_SEED, else 0."""
    if flag is not None:
        return flag
    if config is not None and config.experiment.seed is not None:
        return config.experiment.seed
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2)
        fh.write("\n")


def _read_matrix(path, d: int | None = None) -> np.ndarray:
    """Numeric CSV, with an optional header row."""
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        [float(v) for v in first.strip().split(",") if v.strip()]
        skip = 0
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    if d is not None and data.shape[1] != d:
        raise UsageError(f"{path} has {data.shape[1]} columns, expected {d}")
    return data


def cmd_train(args) -> int:
    config = load_config(args.config)
    topo = config.topology
    seed = resolve_seed(args.seed, config)
    rng = np.random.default_rng(seed)
    if args.data:
        table = _read_matrix(args.data, topo.d + 1)
        X, y = table[:, :-1], table[:, -1]
    else:
        n = args.n if args.n is not None else config.experiment.n
        X, y = generate_dataset(config.data, n, rng)
    hp = schedule(len(y), topo, **config.constants.to_dict())
    steps = hp.t_n
    cap = args.max_steps if args.max_steps is not None else config.experiment.max_steps
    if cap is not None:
        steps = min(steps, cap)
    w, trace = train(X, y, topo, hp, rng, n_steps=steps)
    descent = trace_descent_report(trace, tol=config.check.tol)
    print(f"trained n={len(y)} steps={steps} L_n={hp.L_n:g} seed={seed}")
    print(f"risk {trace.risk[0]:.6g} -> {trace.risk[-1]:.6g}; drift {trace.drift[-1]:.6g}")
    print(f"descent inequalities: {'hold' if descent.passed else 'VIOLATED'} "
          f"(worst slack {descent.worst_slack:.3g})")
    print(validate_theorem_conditions(topo, hp, config.experiment.kappa).summary())
    if args.out:
        save_weights(args.out, w, hp)
    if args.trace:
        rows = [{"t": t, "risk": trace.risk[t], "grad_norm": trace.grad_norm[t],
                 "drift": trace.drift[t], "step_length": trace.step_length[t]}
                for t in range(len(trace))]
        write_results(rows, args.trace)
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        w, hp = load_weights(args.weights)
    except OSError as exc:
        raise UsageError(f"cannot read {args.weights}: {exc.strerror}") from None
    if hp is None:
        raise UsageError(f"{args.weights} has no hyperparams block; cannot truncate")
    X = _read_matrix(args.input, w.topology.d)
    yhat = predict(w, hp, X)
    rows = [{"prediction": float(v)} for v in yhat]
    if args.out:
        write_results(rows, args.out)
    else:
        sys.stdout.write(results_text(rows, "csv"))
    return EXIT_OK


def _suite(name: str, args, config: Config | None):
    seed = resolve_seed(args.seed, config)
    cfg = config.check if config is not None else None
    instances = args.instances
    if instances is None and cfg is not None:
        instances = cfg.instances
    if name == "lemma8":
        pl = checks.pl_suite(instances or 1000, seed,
                             tol=cfg.tol if cfg else checks.DEFAULT_TOL)
        decay = checks.decay_suite(100, 200, seed, tol=cfg.tol if cfg else checks.DEFAULT_TOL)
        return [pl, decay]
    if name == "grad":
        return [checks.gradient_suite(instances or 100, seed)]
    if name == "lemma1":
        return [checks.lemma1_suite(seed, runs=instances or 3)]
    if name == "lemma5":
        return [checks.lemma5_suite(seed, perturbations=instances or 50)]
    if name == "lemma6":
        return [checks.lemma6_suite(seed, C_check=cfg.C_check if cfg else 10.0)]
    if name == "lemma7":
        return [checks.lemma7_suite(seed)]
    if name == "covering":
        consts = {k: getattr(cfg, k) for k in ("c11", "c12", "c13")} if cfg else {}
        return [checks.covering_suite(seed, networks=instances or 100, **consts)]
    raise UsageError(f"unknown check {name!r}")


def cmd_verify(args) -> int:
    config = load_config(args.config) if args.config else None
    results = _suite(args.check, args, config)
    for res in results:
        print("\n".join(res.lines()))
    if args.out:
        _write_json(args.out, [{"suite": r.name, "passed": r.passed, "summary": r.summary,
                                "records": r.records} for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def cmd_consistency(args) -> int:
    config = load_config(args.config)
    exp = config.experiment
    seed = resolve_seed(args.seed, config)
    n_values = args.n_values or list(exp.n_values)
    replicates = args.replicates or exp.replicates
    max_steps = args.max_steps if args.max_steps is not None else exp.max_steps
    result = consistency_curve(config.topology, config.constants, config.data, n_values,
                               replicates, exp.mc_points, seed, exp.kappa, max_steps, exp.n_jobs)
    records = result.records()
    sys.stdout.write(results_text(records, "csv"))
    for n, report in result.conditions.items():
        violated = ", ".join(report.violated) or "none"
        print(f"n={n}: violated conditions: {violated}")
    medians = [r.median_l2 for r in result.rows]
    inversions = count_inversions(medians)
    trend_ok = inversions <= 1
    print(f"median L2 error inversions: {inversions} ({'ok' if trend_ok else 'too many'})")
    descent_ok = all(r.descent_ok for r in result.runs)
    print(f"descent inequalities on all runs: {'hold' if descent_ok else 'VIOLATED'}")
    if args.out:
        write_results(records, args.out, args.format)
    if args.conditions_out:
        _write_json(args.conditions_out,
                    {str(n): rep.to_records() for n, rep in result.conditions.items()})
    if args.require_trend and not trend_ok:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_conditions(args) -> int:
    config = load_config(args.config)
    n = args.n if args.n is not None else config.experiment.n
    kappa = args.kappa if args.kappa is not None else config.experiment.kappa
    hp = schedule(n, config.topology, **config.constants.to_dict())
    report = validate_theorem_conditions(config.topology, hp, kappa)
    print(f"n={n} L_n={hp.L_n:g} t_n={hp.t_n}")
    print(report.summary())
    if args.out:
        write_results([{k: ("" if v is None or (isinstance(v, float) and math.isnan(v)) else v)
                        for k, v in rec.items()} for rec in report.to_records()], args.out,
                      args.format)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="overparam", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help=f"master seed (default: config, then ${SEED_ENV}, then 0)")
        p.add_argument("--out", help="write machine-readable output here")

    p = sub.add_parser("train", help="train one estimator")
    common(p, True)
    p.add_argument("--n", type=int, help="sample size for generated data")
    p.add_argument("--data", help="CSV of training data, last column is the response")
    p.add_argument("--max-steps", type=int, help="stop after this many steps")
    p.add_argument("--trace", help="write the per-step trace as CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="evaluate a saved estimator")
    p.add_argument("--weights", required=True, help="weight file written by train --out")
    p.add_argument("--input", required=True, help="CSV of points, one per row")
    p.add_argument("--out", help="CSV file for predictions (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("check", choices=["lemma1", "lemma5", "lemma6", "lemma7", "lemma8", "grad",
                                     "covering"])
    common(p, False)
    p.add_argument("--instances", type=int, help="number of random instances")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("consistency", help="L2 error against sample size")
    common(p, True)
    p.add_argument("--format", choices=["csv", "json"], help="output format (default: by extension)")
    p.add_argument("--n-values", type=int, nargs="+", help="override the n grid")
    p.add_argument("--replicates", type=int, help="override the replicate count")
    p.add_argument("--max-steps", type=int, help="cap the number of GD steps")
    p.add_argument("--conditions-out", help="write the condition reports as JSON")
    p.add_argument("--require-trend", action="store_true",
                   help="exit 1 when the median error has more than one inversion")
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("conditions", help="report the theorem's conditions for a config")
    common(p, True)
    p.add_argument("--n", type=int, help="sample size (default: experiment.n)")
    p.add_argument("--kappa", type=float, help="exponent for the K_n / n^kappa condition")
    p.add_argument("--format", choices=["csv", "json"], help="output format (default: by extension)")
    p.set_defaults(func=cmd_conditions)
    return parser


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_command())
