"""Distributional k-nearest-neighbour CPTE estimator.

For a query x the k nearest treated and k nearest control units (Euclidean
distance on z-scored covariates, ties broken by lowest training index) form
k x k cross pairs; the CPTE estimate is the mean preference over those pairs.
"""

import math

import numpy as np

from ..data import outcome_column
from ..preference import RISK_DIFFERENCE, pair_mean, require_bounded, reverse

K_RULES = ("one", "log", "2log")


def k_schedule(n, rule="log"):
    """Neighbour count for sample size ``n``: 1, ceil(log n) or ceil(2 log n)."""
    if rule == "one":
        return 1
    if rule == "log":
        return max(1, math.ceil(math.log(n)))
    if rule == "2log":
        return max(1, math.ceil(2 * math.log(n)))
    raise ValueError(f"unknown k rule {rule!r}; expected one of {K_RULES}")


class Standardizer:
    """Per-column z-score with statistics from the training covariates."""

    def __init__(self, x):
        x = np.asarray(x, dtype=float)
        self.mean = x.mean(axis=0)
        scale = x.std(axis=0)
        # constant columns carry no distance information
        self.scale = np.where(scale > 0, scale, 1.0)

    def __call__(self, x):
        return (np.atleast_2d(np.asarray(x, dtype=float)) - self.mean) / self.scale


def nearest(train, query, k, chunk=512):
    """Indices of the ``k`` nearest training rows for each query row.

    Exactly ``k`` indices per row, ordered by training index; among equidistant
    candidates at the k-th distance the lowest indices are kept.
    """
    n = len(train)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    sq_train = np.einsum("ij,ij->i", train, train)
    out = np.empty((len(query), k), dtype=np.intp)
    for start in range(0, len(query), chunk):
        q = query[start:start + chunk]
        dist = sq_train[None, :] - 2.0 * q @ train.T + np.einsum("ij,ij->i", q, q)[:, None]
        np.maximum(dist, 0.0, out=dist)
        if k == n:
            out[start:start + len(q)] = np.arange(n)
            continue
        kth = np.partition(dist, k - 1, axis=1)[:, k - 1:k]
        below = dist < kth
        need = k - below.sum(axis=1, keepdims=True)
        at = dist == kth
        keep = below | (at & (np.cumsum(at, axis=1) <= need))
        out[start:start + len(q)] = np.nonzero(keep)[1].reshape(len(q), k)
    return out


class KnnCpte:
    """Fitted distributional k-NN model.

    Attributes:
        k: neighbours per arm.
        w: preference function.
    """

    name = "knn"

    def __init__(self, data, w, k):
        if w.kind != RISK_DIFFERENCE:
            require_bounded(w)
        self.w, self.k = w, int(k)
        data.check_arms()
        idx1, idx0 = data.arm(1), data.arm(0)
        if self.k < 1 or self.k > min(len(idx1), len(idx0)):
            raise ValueError(f"k={self.k} exceeds the smaller arm size {min(len(idx1), len(idx0))}")
        self.scaler = Standardizer(data.x)
        z = self.scaler(data.x)
        self.z1, self.z0 = z[idx1], z[idx0]
        self.y1, self.y0 = outcome_column(data.y[idx1]), outcome_column(data.y[idx0])

    def neighbours(self, x, arm):
        z = self.scaler(x)
        return nearest(self.z1 if arm == 1 else self.z0, z, self.k)

    def predict(self, x):
        """Return ``(q_w, q_l)`` at each row of ``x``."""
        y1 = self.y1[self.neighbours(x, 1)]
        y0 = self.y0[self.neighbours(x, 0)]
        qw = pair_mean(self.w, y1, y0)
        if self.w.tie_aware:
            return qw, 1.0 - qw
        return qw, pair_mean(reverse(self.w), y1, y0)

    def p_hat(self, x, t, y):
        """Per-observation corrections ``(p_w, p_l)`` from the opposite arm's neighbours."""
        x = np.atleast_2d(x)
        t = np.asarray(t).ravel()
        y = np.asarray(y, dtype=float)
        pw = np.empty(len(x))
        pl = np.empty(len(x))
        for arm in (0, 1):
            rows = np.flatnonzero(t == arm)
            if not len(rows):
                continue
            other = self.y0 if arm == 1 else self.y1
            opp = other[self.neighbours(x[rows], 1 - arm)]
            own = _expand(outcome_column(y[rows]), opp)
            if arm == 1:
                pw[rows] = self.w(own, opp).mean(axis=1)
                pl[rows] = self.w(opp, own).mean(axis=1)
            else:
                pw[rows] = self.w(opp, own).mean(axis=1)
                pl[rows] = self.w(own, opp).mean(axis=1)
        return pw, pl

    def summary(self):
        return {"model": "knn", "k": self.k, "preference": self.w.kind,
                "n_treated": len(self.y1), "n_control": len(self.y0)}


def _expand(own, opp):
    # own: (m,) or (m, d); opp: (m, k) or (m, k, d)
    return own[:, None] if own.ndim == 1 else own[:, None, :]


def knn_cpte(data, w, k, x):
    """Distributional k-NN estimates ``(q_w, q_l)`` at the rows of ``x``."""
    return KnnCpte(data, w, k).predict(x)


def knn_cate(data, k, x):
    """k-NN T-learner CATE: mean treated minus mean control neighbour outcome."""
    data.check_arms()
    scaler = Standardizer(data.x)
    z = scaler(data.x)
    idx1, idx0 = data.arm(1), data.arm(0)
    if k > min(len(idx1), len(idx0)):
        raise ValueError(f"k={k} exceeds the smaller arm size {min(len(idx1), len(idx0))}")
    zq = scaler(x)
    y1 = outcome_column(data.y[idx1])[nearest(z[idx1], zq, k)]
    y0 = outcome_column(data.y[idx0])[nearest(z[idx0], zq, k)]
    return y1.mean(axis=1) - y0.mean(axis=1)

