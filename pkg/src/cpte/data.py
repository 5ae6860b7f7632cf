"""Dataset container and the CSV interchange format.

Columns are ``x0..x{p-1}``, ``t``, ``y0..y{d-1}``; datasets written with oracle
columns add ``po0_y{j}`` / ``po1_y{j}`` (potential outcomes under control and
treatment) and ``propensity``.
"""

import csv
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class SchemaError(ValueError):
    """Input file does not match the expected column layout."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class DegenerateDataError(ValueError):
    """Data is structurally valid but unusable (empty arm, no rows left, ...)."""


@dataclass
class Dataset:
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    y0: Optional[np.ndarray] = None
    y1: Optional[np.ndarray] = None
    propensity: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.t = np.asarray(self.t).astype(int).ravel()
        self.y = _as_outcome_matrix(self.y)
        if self.y0 is not None:
            self.y0 = _as_outcome_matrix(self.y0)
            self.y1 = _as_outcome_matrix(self.y1)
        if not (len(self.x) == len(self.t) == len(self.y)):
            raise ValueError(f"row counts differ: x={len(self.x)}, t={len(self.t)}, y={len(self.y)}")
        if not np.isin(self.t, (0, 1)).all():
            raise SchemaError("treatment must be binary", column="t")
        if not np.isfinite(self.y).all():
            raise SchemaError("outcomes must be finite", column="y0")

    @property
    def n(self):
        return len(self.t)

    @property
    def d(self):
        return self.y.shape[1]

    @property
    def has_oracle(self):
        return self.y0 is not None

    def arm(self, t):
        return np.flatnonzero(self.t == t)

    def subset(self, idx):
        pick = lambda a: None if a is None else a[idx]
        return Dataset(self.x[idx], self.t[idx], self.y[idx], pick(self.y0), pick(self.y1),
                       pick(self.propensity), dict(self.meta))

    def check_arms(self):
        for arm in (0, 1):
            if not np.any(self.t == arm):
                raise DegenerateDataError(f"arm {arm} is empty")


def _as_outcome_matrix(y):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    return y


def outcome_column(y):
    """Scalar view of a d = 1 outcome matrix, else the matrix itself."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 2 and y.shape[1] == 1:
        return y[:, 0]
    return y


def _fmt(v):
    return repr(float(v))


def write_csv(path, data, with_oracle=False):
    p, d = data.x.shape[1], data.d
    header = [f"x{j}" for j in range(p)] + ["t"] + [f"y{j}" for j in range(d)]
    if with_oracle:
        if not data.has_oracle:
            raise ValueError("dataset carries no potential outcomes")
        header += [f"po0_y{j}" for j in range(d)] + [f"po1_y{j}" for j in range(d)] + ["propensity"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(data.n):
            row = [_fmt(v) for v in data.x[i]] + [str(int(data.t[i]))] + [_fmt(v) for v in data.y[i]]
            if with_oracle:
                prop = data.propensity[i] if data.propensity is not None else float("nan")
                row += [_fmt(v) for v in data.y0[i]] + [_fmt(v) for v in data.y1[i]] + [_fmt(prop)]
            writer.writerow(row)


_NUMBERED = re.compile(r"^(x|y|po0_y|po1_y)(\d+)$")


def _numbered(header, prefix):
    cols = {}
    for j, name in enumerate(header):
        m = _NUMBERED.match(name)
        if m and m.group(1) == prefix:
            cols[int(m.group(2))] = j
    if sorted(cols) != list(range(len(cols))):
        missing = next(i for i in range(len(cols) + 1) if i not in cols)
        raise SchemaError(f"column {prefix}{missing} is missing", column=f"{prefix}{missing}")
    return [cols[i] for i in range(len(cols))]


def read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        rows = [row for row in reader if row]
    return header, rows


def _to_float(rows, idx, name):
    try:
        return np.array([float(r[idx]) for r in rows], dtype=float)
    except (ValueError, IndexError):
        raise SchemaError(f"column {name} has a non-numeric or missing value", column=name) from None


def read_points(path):
    header, rows = read_table(path)
    xs = _numbered(header, "x")
    if not xs:
        raise SchemaError("no covariate columns x0.. found", column="x0")
    return np.column_stack([_to_float(rows, j, header[j]) for j in xs]) if rows else np.empty((0, len(xs)))


def read_csv(path):
    """Read a dataset written by :func:`write_csv` (oracle columns optional)."""
    header, rows = read_table(path)
    known = {"t", "propensity"}
    for name in header:
        if name not in known and not _NUMBERED.match(name):
            raise SchemaError(f"unexpected column {name!r}", column=name)
    xs = _numbered(header, "x")
    ys = _numbered(header, "y")
    if not xs:
        raise SchemaError("no covariate columns x0.. found", column="x0")
    if "t" not in header:
        raise SchemaError("treatment column t is missing", column="t")
    if not ys:
        raise SchemaError("no outcome columns y0.. found", column="y0")
    if not rows:
        raise DegenerateDataError(f"{path} has no data rows")
    x = np.column_stack([_to_float(rows, j, header[j]) for j in xs])
    t_raw = _to_float(rows, header.index("t"), "t")
    if not np.isin(t_raw, (0.0, 1.0)).all():
        raise SchemaError("column t must be binary (0/1)", column="t")
    y = np.column_stack([_to_float(rows, j, header[j]) for j in ys])
    y0 = y1 = prop = None
    if any(h.startswith("po0_y") for h in header):
        p0, p1 = _numbered(header, "po0_y"), _numbered(header, "po1_y")
        y0 = np.column_stack([_to_float(rows, j, header[j]) for j in p0])
        y1 = np.column_stack([_to_float(rows, j, header[j]) for j in p1])
    if "propensity" in header:
        prop = _to_float(rows, header.index("propensity"), "propensity")
    return Dataset(x, t_raw.astype(int), y, y0, y1, prop)
