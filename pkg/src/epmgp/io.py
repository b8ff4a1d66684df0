"""Problem files (JSON) and result tables (CSV).

A problem file looks like::

    {"mean": [0, 0],
     "cov": [[1, 0], [0, 1]],
     "constraints": [{"direction": [1, 0], "lower": -1, "upper": 1},
                     {"direction": [0, 1], "lower": "-inf", "upper": 1}],
     "alphas": [1, 1]}

Bounds may be numbers, the strings ``"-inf"``/``"inf"``, or ``null`` for
unbounded.  ``alphas`` is optional.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .gaussian import BoxConstraint, GaussianDist, PolyhedralRegion

__all__ = [
    "ProblemSpec",
    "parse_problem",
    "load_problem",
    "problem_to_dict",
    "format_value",
    "format_csv",
    "dataclass_rows",
    "write_text",
]


@dataclass(frozen=True)
class ProblemSpec:
    prior: GaussianDist
    region: PolyhedralRegion
    alphas: np.ndarray | None = None


def _bound(value: Any, field: str, default: float) -> float:
    if value is None:
        return default
    if isinstance(value, str):
        key = value.strip().lower()
        if key in ("-inf", "-infinity"):
            return -math.inf
        if key in ("inf", "+inf", "infinity"):
            return math.inf
        raise ValidationError(field, f"expected a number, 'inf', '-inf' or null, got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(field, f"expected a number, got {value!r}")
    v = float(value)
    if math.isnan(v):
        raise ValidationError(field, "NaN is not a valid bound")
    return v


def _array(value: Any, field: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(field, "must be numeric") from None
    if arr.ndim != ndim:
        raise ValidationError(field, f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(field, "entries must be finite")
    return arr


def parse_problem(data: Mapping[str, Any]) -> ProblemSpec:
    """Validate a decoded problem document."""
    if not isinstance(data, Mapping):
        raise ValidationError("problem", "top level must be a JSON object")
    for key in ("mean", "cov", "constraints"):
        if key not in data:
            raise ValidationError(key, "missing")
    mean = _array(data["mean"], "mean", 1)
    cov = _array(data["cov"], "cov", 2)
    if cov.shape != (mean.size, mean.size):
        raise ValidationError("cov", f"shape {cov.shape} does not match mean of length {mean.size}")
    prior = GaussianDist(mean, cov)

    cons = data["constraints"]
    if not isinstance(cons, Sequence) or isinstance(cons, str) or len(cons) == 0:
        raise ValidationError("constraints", "must be a non-empty list")
    boxes = []
    for i, c in enumerate(cons):
        where = f"constraints[{i}]"
        if not isinstance(c, Mapping) or "direction" not in c:
            raise ValidationError(where, "each constraint needs a 'direction'")
        d = _array(c["direction"], f"{where}.direction", 1)
        if d.size != mean.size:
            raise ValidationError(f"{where}.direction", f"length {d.size} does not match dimension {mean.size}")
        lo = _bound(c.get("lower"), f"{where}.lower", -math.inf)
        hi = _bound(c.get("upper"), f"{where}.upper", math.inf)
        try:
            boxes.append(BoxConstraint.create(d, lo, hi))
        except ValidationError as exc:
            raise ValidationError(f"{where}.{exc.field}", exc.message) from None
    region = PolyhedralRegion(boxes)

    alphas = None
    if data.get("alphas") is not None:
        alphas = _array(data["alphas"], "alphas", 1)
        if alphas.size != region.m:
            raise ValidationError("alphas", f"need one power per constraint ({region.m}), got {alphas.size}")
        if np.any(alphas <= 0):
            raise ValidationError("alphas", "powers must be positive")
    return ProblemSpec(prior, region, alphas)


def load_problem(path: str | Path) -> ProblemSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError("problem", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError("problem", f"invalid JSON: {exc}") from None
    return parse_problem(data)


def _json_bound(v: float):
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return float(v)


def problem_to_dict(prior: GaussianDist, region: PolyhedralRegion, alphas=None) -> dict:
    out = {
        "mean": prior.mean.tolist(),
        "cov": prior.cov.tolist(),
        "constraints": [
            {"direction": d.tolist(), "lower": _json_bound(lo), "upper": _json_bound(hi)}
            for d, lo, hi in zip(region.directions, region.lower, region.upper)
        ],
    }
    if alphas is not None:
        out["alphas"] = np.broadcast_to(np.asarray(alphas, float), (region.m,)).tolist()
    return out


# ---------------------------------------------------------------------------
# CSV


def format_value(v: Any) -> str:
    """17 significant digits for reals, lowercase booleans, ``""`` for None."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.17g" % v
    return str(v)


def format_csv(columns: Sequence[str], rows: Iterable[Mapping[str, Any]], metadata: Mapping[str, Any] | None = None) -> str:
    """Render rows as CSV text with ``# key: value`` metadata lines on top.

    Rows are written in the order given; missing keys become empty cells.
    """
    buf = io.StringIO()
    for key, value in (metadata or {}).items():
        text = format_value(value).replace("\n", " ")
        buf.write(f"# {key}: {text}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(row.get(c)) for c in columns])
    return buf.getvalue()


def dataclass_rows(items: Iterable[Any], rename: Mapping[str, str] | None = None) -> list[dict]:
    rename = rename or {}
    return [{rename.get(k, k): v for k, v in dataclasses.asdict(it).items()} for it in items]


def write_text(text: str, path: str | Path | None) -> None:
    """Write to ``path``, or to stdout when it is None or ``-``."""
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)
