"""Weight-vector JSON files and CSV/JSON result tables."""
from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .estimator import Hyperparams
from .net import Topology, WeightVector

CURVE_COLUMNS = ("n", "replicates", "median_l2", "q25", "q75", "mean_final_risk", "conditions_ok")


def weights_to_dict(w: WeightVector, hp: Hyperparams | None = None) -> dict:
    out = {"topology": w.topology.to_dict()}
    if hp is not None:
        out["hyperparams"] = hp.to_dict()
    out["outer"] = w.outer.tolist()
    out["subnets"] = [{"layer0": w.layer0[k].tolist(), "hidden": w.hidden[k].tolist()}
                      for k in range(w.topology.K_n)]
    return out


def weights_from_dict(obj: dict) -> tuple:
    """Inverse of ``weights_to_dict``; returns ``(weights, hyperparams or None)``."""
    try:
        t = obj["topology"]
        topo = Topology(int(t["d"]), int(t["L"]), int(t["r"]), int(t["K_n"]))
        outer = np.asarray(obj["outer"], dtype=float)
        subnets = obj["subnets"]
        layer0 = np.asarray([s["layer0"] for s in subnets], dtype=float)
        hidden = np.asarray([s["hidden"] for s in subnets], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed weight file: missing {exc}") from None
    w = WeightVector(topo, outer, layer0, hidden)
    if not w.is_finite():
        raise ValueError("weight file contains non-finite entries")
    hp = None
    if "hyperparams" in obj:
        h = obj["hyperparams"]
        hp = Hyperparams(h["n"], float(h["tau"]), float(h["c1"]), float(h["c2"]),
                         float(h["c3"]), float(h["c4"]), float(h["L_n"]),
                         bool(h.get("theory_mode", False)))
    return w, hp


def save_weights(path, w: WeightVector, hp: Hyperparams | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(weights_to_dict(w, hp), fh)
        fh.write("\n")


def load_weights(path) -> tuple:
    with open(path, encoding="utf-8") as fh:
        return weights_from_dict(json.load(fh))


def format_value(v) -> str:
    """Text form used in result files: floats with 17 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return format(v, ".17g")
    if v is None:
        return "null"
    return str(v)


def _json_value(v) -> str:
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    return format_value(v)


def _columns(records, columns):
    if columns is None:
        columns = tuple(records[0]) if records else CURVE_COLUMNS
    columns = tuple(columns)
    for i, rec in enumerate(records):
        if set(rec) != set(columns):
            raise ValueError(f"record {i} has keys {sorted(rec)}, expected {sorted(columns)}")
    return columns


def results_text(records, fmt: str = "csv", columns=None) -> str:
    records = [dict(r) for r in records]
    columns = _columns(records, columns)
    if fmt == "csv":
        lines = [",".join(columns)]
        lines += [",".join(_csv_cell(rec[c]) for c in columns) for rec in records]
        return "\n".join(lines) + "\n"
    if fmt == "json":
        rows = ["  {" + ", ".join(f"{json.dumps(c)}: {_json_value(rec[c])}" for c in columns) + "}"
                for rec in records]
        return "[\n" + ",\n".join(rows) + "\n]\n" if rows else "[]\n"
    raise ValueError(f"unknown format {fmt!r}; use csv or json")


def _csv_cell(v) -> str:
    text = format_value(v)
    if any(ch in text for ch in ',"\n'):
        text = '"' + text.replace('"', '""') + '"'
    return text


def write_results(records, path, fmt: str | None = None, columns=None) -> None:
    """Write homogeneous records as CSV (with header) or as a JSON array.

    ``fmt`` defaults to the file extension. An empty list gives a header-only
    CSV with the consistency-curve columns unless ``columns`` is given.
    """
    if fmt is None:
        fmt = "json" if os.fspath(path).lower().endswith(".json") else "csv"
    text = results_text(records, fmt, columns)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_results(path, fmt: str | None = None) -> list:
    """Read back a file written by ``write_results``."""
    if fmt is None:
        fmt = "json" if os.fspath(path).lower().endswith(".json") else "csv"
    with open(path, encoding="utf-8", newline="") as fh:
        if fmt == "json":
            return json.load(fh)
        rows = list(csv.DictReader(fh))
    return [{k: _parse_cell(v) for k, v in row.items()} for row in rows]


def _parse_cell(text: str):
    if text in ("true", "false"):
        return text == "true"
    if text == "null":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text
