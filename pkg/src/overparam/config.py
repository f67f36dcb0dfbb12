"""JSON run configuration with strict key and range validation.

Example (comments are not allowed in JSON; see README for field meanings)::

    {
      "topology":   {"d": 1, "L": 2, "r": 2, "K_n": 512},
      "constants":  {"tau": null, "c1": 1.0, "c2": 0.1, "c3": 1.0, "c4": 1.0, "L_n": 1000.0},
      "data":       {"target": "sin_product", "distribution": "uniform", "noise_sigma": 0.2},
      "experiment": {"n_values": [50, 100, 200, 400], "replicates": 10, "mc_points": 100000,
                     "seed": 0, "n": 100},
      "check":      {"tol": 1e-9, "C_check": 10.0, "c5": 1.0, "c7": 1.0,
                     "c11": 1.0, "c12": 1.0, "c13": 1.0}
    }

Only ``topology`` (with ``d``) and ``data`` are required.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .estimator import default_tau
from .experiments import DISTRIBUTIONS, TARGETS, Constants, DataSpec
from .net import Topology


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_TOPOLOGY_KEYS = {"d", "L", "r", "K_n"}
_CONSTANT_KEYS = {"tau", "c1", "c2", "c3", "c4", "L_n"}
_DATA_KEYS = {"target", "distribution", "noise_sigma", "d", "half_width"}
_EXPERIMENT_KEYS = {"n_values", "replicates", "mc_points", "seed", "n", "max_steps", "kappa",
                    "n_jobs"}
_CHECK_KEYS = {"tol", "C_check", "c5", "c7", "c11", "c12", "c13", "instances"}
_BLOCKS = {"topology": _TOPOLOGY_KEYS, "constants": _CONSTANT_KEYS, "data": _DATA_KEYS,
           "experiment": _EXPERIMENT_KEYS, "check": _CHECK_KEYS}
_REQUIRED = ("topology", "data")


@dataclass(frozen=True)
class ExperimentSpec:
    n_values: tuple = (50, 100, 200, 400)
    replicates: int = 10
    mc_points: int = 100_000
    seed: int | None = None
    n: int = 100
    max_steps: int | None = None
    kappa: float | None = None
    n_jobs: int = 1


@dataclass(frozen=True)
class CheckSpec:
    tol: float = 1e-9
    C_check: float = 10.0
    c5: float = 1.0
    c7: float = 1.0
    c11: float = 1.0
    c12: float = 1.0
    c13: float = 1.0
    instances: int | None = None


@dataclass(frozen=True)
class Config:
    topology: Topology
    data: DataSpec
    constants: Constants = field(default_factory=Constants)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    check: CheckSpec = field(default_factory=CheckSpec)

    def to_dict(self) -> dict:
        return {
            "topology": self.topology.to_dict(),
            "constants": self.constants.to_dict(),
            "data": self.data.to_dict(),
            "experiment": {**self.experiment.__dict__, "n_values": list(self.experiment.n_values)},
            "check": dict(self.check.__dict__),
        }


def _reject_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise ConfigError(f"duplicate key {key!r}")
        out[key] = value
    return out


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _integer(block: str, key: str, value, minimum: int) -> int:
    if not (_is_number(value) and float(value).is_integer()):
        raise ConfigError(f"{block}.{key} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{block}.{key} must be >= {minimum}, got {value}")
    return int(value)


def _positive(block: str, key: str, value) -> float:
    if not _is_number(value) or not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{block}.{key} must be a positive finite number, got {value!r}")
    return float(value)


def _block(raw: dict, name: str) -> dict:
    block = raw.get(name, {})
    if not isinstance(block, dict):
        raise ConfigError(f"{name} must be an object")
    unknown = set(block) - _BLOCKS[name]
    if unknown:
        raise ConfigError(f"unknown key {name}.{sorted(unknown)[0]}")
    return block


def parse_config(raw) -> Config:
    """Validate an already-decoded config mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(_BLOCKS)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]}")
    for name in _REQUIRED:
        if name not in raw:
            raise ConfigError(f"missing required block {name!r}")

    tb = _block(raw, "topology")
    if "d" not in tb:
        raise ConfigError("missing required key topology.d")
    d = _integer("topology", "d", tb["d"], 1)
    L = _integer("topology", "L", tb.get("L", 2), 2)
    r = _integer("topology", "r", tb.get("r", 2 * d), 1)
    if r < 2 * d:
        raise ConfigError(f"topology.r must be >= 2d = {2 * d}, got {r}")
    K_n = _integer("topology", "K_n", tb.get("K_n", 512), 1)
    topo = Topology(d, L, r, K_n)

    cb = _block(raw, "constants")
    tau = cb.get("tau")
    if tau is not None:
        if not _is_number(tau):
            raise ConfigError(f"constants.tau must be a number, got {tau!r}")
        if not 0 < tau < 1 / (d + 1):
            raise ConfigError(f"constants.tau must lie in (0, 1/(d+1)) = (0, {1 / (d + 1):.6g}), "
                              f"got {tau}")
    cvals = {k: _positive("constants", k, cb.get(k, getattr(Constants, k)))
             for k in ("c1", "c2", "c3", "c4")}
    L_n = cb.get("L_n", Constants.L_n)
    if L_n is not None:
        L_n = _positive("constants", "L_n", L_n)
    constants = Constants(None if tau is None else float(tau), L_n=L_n, **cvals)

    db = _block(raw, "data")
    target = db.get("target", DataSpec.target)
    if target not in TARGETS:
        raise ConfigError(f"data.target must be one of {sorted(TARGETS)}, got {target!r}")
    dist = db.get("distribution", DataSpec.distribution)
    if dist not in DISTRIBUTIONS:
        raise ConfigError(f"data.distribution must be one of {list(DISTRIBUTIONS)}, got {dist!r}")
    sigma = db.get("noise_sigma", DataSpec.noise_sigma)
    if not _is_number(sigma) or not sigma >= 0:
        raise ConfigError(f"data.noise_sigma must be >= 0, got {sigma!r}")
    if "d" in db and _integer("data", "d", db["d"], 1) != d:
        raise ConfigError(f"data.d = {db['d']} differs from topology.d = {d}")
    half_width = _positive("data", "half_width", db.get("half_width", DataSpec.half_width))
    data = DataSpec(target, dist, float(sigma), d, half_width)

    eb = _block(raw, "experiment")
    n_values = eb.get("n_values", list(ExperimentSpec.n_values))
    if not isinstance(n_values, list) or not n_values:
        raise ConfigError("experiment.n_values must be a nonempty list")
    n_values = [_integer("experiment", "n_values", v, 2) for v in n_values]
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ConfigError("experiment.n_values must be strictly increasing")
    seed = eb.get("seed")
    if seed is not None:
        seed = _integer("experiment", "seed", seed, 0)
    max_steps = eb.get("max_steps")
    if max_steps is not None:
        max_steps = _integer("experiment", "max_steps", max_steps, 0)
    kappa = eb.get("kappa")
    if kappa is not None:
        kappa = _positive("experiment", "kappa", kappa)
    experiment = ExperimentSpec(
        tuple(n_values),
        _integer("experiment", "replicates", eb.get("replicates", ExperimentSpec.replicates), 1),
        _integer("experiment", "mc_points", eb.get("mc_points", ExperimentSpec.mc_points), 1),
        seed,
        _integer("experiment", "n", eb.get("n", ExperimentSpec.n), 2),
        max_steps,
        kappa,
        _integer("experiment", "n_jobs", eb.get("n_jobs", 1), -1),
    )

    kb = _block(raw, "check")
    check_vals = {k: _positive("check", k, kb.get(k, getattr(CheckSpec, k)))
                  for k in ("tol", "C_check", "c5", "c7", "c11", "c12", "c13")}
    instances = kb.get("instances")
    if instances is not None:
        instances = _integer("check", "instances", instances, 1)
    check = CheckSpec(**check_vals, instances=instances)
    return Config(topo, data, constants, experiment, check)


def loads_config(text: str) -> Config:
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(raw)


def load_config(path) -> Config:
    """Read and validate a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return loads_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def effective_tau(config: Config) -> float:
    return default_tau(config.topology.d) if config.constants.tau is None else config.constants.tau
