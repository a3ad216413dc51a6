"""CSV and JSON serialization for datasets, neighbor tables and fit results.

CSV for data and neighbor caches, JSON for fit results; all floats are
written with shortest-round-trip decimal formatting so reading a file
back reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .errors import MissingColumn, ParseError
from .model import CovarianceParameters, Dataset, FitResult
from .preprocess import NeighborArray


def _parse_cell(text, path, line_no, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(
            f"{path}: column {column!r} value {text!r} is not a number", line=line_no
        ) from None
    if not math.isfinite(value):
        raise ParseError(
            f"{path}: column {column!r} value {text!r} is not finite", line=line_no
        )
    return value


def read_csv_dataset(path, y_col, x_cols, loc_cols, intercept=False) -> Dataset:
    """Column-selected dataset from a headed CSV file.

    `intercept=True` appends an all-ones design column after the
    selected x columns (or as the only one when x_cols is empty).
    Any unparsable or non-finite cell raises ParseError with its line
    number.
    """
    x_cols = list(x_cols)
    loc_cols = list(loc_cols)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", line=1) from None
        header = [h.strip() for h in header]
        index = {}
        for name in [y_col, *x_cols, *loc_cols]:
            if name not in header:
                raise MissingColumn(f"{path}: column {name!r} not in header {header}")
            index[name] = header.index(name)
        y, X, locs = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: expected {len(header)} cells, got {len(row)}", line=line_no
                )
            y.append(_parse_cell(row[index[y_col]], path, line_no, y_col))
            X.append([_parse_cell(row[index[c]], path, line_no, c) for c in x_cols])
            locs.append([_parse_cell(row[index[c]], path, line_no, c) for c in loc_cols])
    if not y:
        raise ParseError(f"{path}: no data rows", line=2)
    n = len(y)
    X_arr = np.asarray(X, dtype=np.float64).reshape(n, len(x_cols))
    if intercept:
        X_arr = np.hstack([X_arr, np.ones((n, 1))]) if x_cols else np.ones((n, 1))
    elif not x_cols:
        raise MissingColumn(f"{path}: no design columns selected and intercept disabled")
    return Dataset(y=np.asarray(y), X=X_arr, locs=np.asarray(locs))


def write_csv_dataset(ds: Dataset, path, y_col="y", x_prefix="x", loc_prefix="loc"):
    """Dataset to CSV with generated column names; shortest round-trip floats."""
    header = (
        [y_col]
        + [f"{x_prefix}{j}" for j in range(ds.p)]
        + [f"{loc_prefix}{j}" for j in range(ds.d)]
    )
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(ds.n):
            writer.writerow(
                [repr(float(ds.y[i]))]
                + [repr(float(v)) for v in ds.X[i]]
                + [repr(float(v)) for v in ds.locs[i]]
            )


def write_neighbors_csv(nn: NeighborArray, path):
    """Neighbor table cache, one row per observation, sentinels kept as -1."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"nn{j}" for j in range(nn.idx.shape[1])])
        for row in nn.idx:
            writer.writerow([int(v) for v in row])


def read_neighbors_csv(path) -> NeighborArray:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", line=1) from None
        width = len(header)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(
                    f"{path}: expected {width} cells, got {len(row)}", line=line_no
                )
            try:
                rows.append([int(v) for v in row])
            except ValueError:
                raise ParseError(f"{path}: non-integer neighbor index", line=line_no) from None
    return NeighborArray(np.asarray(rows, dtype=np.int64))


FIT_SCHEMA_KEYS = (
    "version",
    "family",
    "theta_hat",
    "beta_hat",
    "beta_cov",
    "fisher_info",
    "loglik_trace",
    "iterations",
    "converged",
    "phase_timings_ms",
    "config",
)


def fit_to_dict(fit: FitResult, config=None, version="0.1.0") -> dict:
    return {
        "version": version,
        "family": fit.theta_hat.family,
        "theta_hat": [float(v) for v in fit.theta_hat.theta],
        "beta_hat": [float(v) for v in fit.beta_hat],
        "beta_cov": [[float(v) for v in row] for row in np.atleast_2d(fit.beta_cov)],
        "fisher_info": [[float(v) for v in row] for row in np.atleast_2d(fit.fisher_info)],
        "loglik_trace": [float(v) for v in fit.loglik_trace],
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
        "phase_timings_ms": {k: float(v) for k, v in fit.phase_timings.items()},
        "config": dict(config) if config else {},
    }


def write_fit_json(fit: FitResult, path, config=None, version="0.1.0"):
    """Stable-schema fit document; floats keep full precision via repr."""
    with open(path, "w") as handle:
        json.dump(fit_to_dict(fit, config=config, version=version), handle, indent=2)
        handle.write("\n")


def read_fit_json(path) -> dict:
    with open(path) as handle:
        return json.load(handle)


def fit_from_dict(doc: dict) -> FitResult:
    """Rebuild the FitResult a document describes (for prediction reuse)."""
    return FitResult(
        theta_hat=CovarianceParameters(
            family=doc["family"], theta=np.asarray(doc["theta_hat"])
        ),
        beta_hat=np.asarray(doc["beta_hat"]),
        beta_cov=np.asarray(doc["beta_cov"]),
        loglik_trace=list(doc["loglik_trace"]),
        fisher_info=np.asarray(doc["fisher_info"]),
        iterations=int(doc["iterations"]),
        converged=bool(doc["converged"]),
        phase_timings=dict(doc.get("phase_timings_ms", {})),
    )
