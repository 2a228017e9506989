"""CSV and JSON persistence for datasets, posteriors and reports."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .inference import WeightedPosterior


class DataFormatError(ValueError):
    """Malformed input file; the message names the offending line."""


def _fmt(v: float) -> str:
    return repr(float(v))


def _read_rows(path, skip_header: bool = False):
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    start = 1 if skip_header else 0
    if len(rows) <= start:
        raise DataFormatError(f"{path}: line {start + 1}: file has no data rows")
    header = rows[0] if skip_header else None
    width = None
    values = []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not c.strip() for c in row):
            raise DataFormatError(f"{path}: line {lineno}: empty row")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataFormatError(f"{path}: line {lineno}: expected {width} columns, found {len(row)}")
        try:
            values.append([float(c) for c in row])
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: non-numeric cell ({exc})") from None
    return header, np.array(values)


def load_dataset(path) -> np.ndarray:
    """Load a headerless CSV, one observation per row.

    A single-column file is returned as a 1-d time series.
    """
    _, arr = _read_rows(path)
    return arr[:, 0] if arr.shape[1] == 1 else arr


def save_dataset(path, y) -> None:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in y:
            w.writerow([_fmt(v) for v in row])


def save_posterior(path, post: WeightedPosterior, names=None) -> None:
    d = post.params.shape[1]
    names = list(names) if names is not None else [f"theta{i + 1}" for i in range(d)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, "weight"])
        for theta, wt in zip(post.params, post.weights):
            w.writerow([*(_fmt(v) for v in theta), _fmt(wt)])


def load_posterior(path, weight_kind: str = "normalized") -> WeightedPosterior:
    header, arr = _read_rows(path, skip_header=True)
    if header[-1] != "weight":
        raise DataFormatError(f"{path}: line 1: last column must be 'weight'")
    return WeightedPosterior(arr[:, :-1], arr[:, -1], weight_kind)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path, obj) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path):
    with Path(path).open(encoding="utf-8") as fh:
        return json.load(fh)
