"""CSV readers for the run/eval schemas; refuse unknown versions."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

KNOWN_SCHEMA_VERSIONS = {1}


class SchemaError(Exception):
    """Input CSV has an unknown schema version or malformed layout."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = Path(path)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "schema_version":
        raise SchemaError(path, "missing schema_version column")
    header = rows[0][1:]
    body = []
    for row in rows[1:]:
        if not row:
            continue
        try:
            version = int(row[0])
        except ValueError as exc:
            raise SchemaError(path, f"bad schema_version value {row[0]!r}") from exc
        if version not in KNOWN_SCHEMA_VERSIONS:
            raise SchemaError(path, f"unknown schema_version {version}")
        body.append(row[1:])
    return header, body


def read_metrics(path) -> dict[str, np.ndarray]:
    header, body = read_csv(path)
    cols = {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}
    return cols


def read_bands(path):
    header, body = read_csv(path)
    idx = {name: i for i, name in enumerate(header)}
    it = np.array([float(r[idx["iteration"]]) for r in body])
    lo = np.array([float(r[idx["min"]]) for r in body])
    hi = np.array([float(r[idx["max"]]) for r in body])
    return it, lo, hi


def read_alloc(path):
    header, body = read_csv(path)
    idx = {name: i for i, name in enumerate(header)}
    labels = [r[idx["asset"]] for r in body]
    weights = np.array([float(r[idx["weight"]]) for r in body])
    return labels, weights


def read_heatmap(path):
    header, body = read_csv(path)
    idx = {name: i for i, name in enumerate(header)}
    t = np.array([float(r[idx["t"]]) for r in body])
    x = np.array([float(r[idx["x"]]) for r in body])
    pi = np.array([float(r[idx["pi"]]) for r in body])
    ts = np.unique(t)
    xs = np.unique(x)
    grid = np.full((ts.size, xs.size), np.nan)
    ti = np.searchsorted(ts, t)
    xi = np.searchsorted(xs, x)
    grid[ti, xi] = pi
    if np.isnan(grid).any():
        raise SchemaError(path, "heatmap grid is not a full lattice")
    return ts, xs, grid
