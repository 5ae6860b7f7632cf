"""Sampling-based CPTE estimation from per-arm quantile models."""

import numpy as np
from sklearn.neighbors import KNeighborsClassifier

from ..preference import require_bounded, reverse
from .samplers import BernoulliModel, FactorizedSampler

DEFAULT_GRID_SIZE = 256
DEFAULT_SAMPLES = 1000


def _setup(grid_size, samples, seed):
    if grid_size < 2:
        raise ValueError("grid size must be at least 2")
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    return rng, np.sort(rng.random(grid_size))


def _chunks(m, s, budget=2_000_000):
    step = max(1, budget // max(s, 1))
    return range(0, m, step), step


def algo1_estimate(m1, m0, x, w, grid_size=DEFAULT_GRID_SIZE, samples=DEFAULT_SAMPLES, seed=0):
    """Estimate ``(q_w, q_l)`` at each row of ``x`` by paired inverse-CDF sampling.

    A random grid ``Q ~ U(0,1)^grid_size`` is shared by both arms; each of the
    ``samples`` uniform pairs is mapped through the interpolated quantile tables
    and the preference is averaged over those pairs (the reversed preference on
    the same pairs gives ``q_l``).

    Args:
        m1: sampler for the treated arm.
        m0: sampler for the control arm.
        x: query covariates ``(m, p)``.
        w: bounded preference function.
        grid_size: number of random quantile levels.
        samples: number of uniform pairs per query.
        seed: integer seed.

    Returns:
        Tuple of arrays ``(q_w, q_l)``.
    """
    require_bounded(w)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rng, grid = _setup(grid_size, samples, seed)
    w_l = reverse(w)
    qw = np.empty(len(x))
    ql = np.empty(len(x))
    starts, step = _chunks(len(x), samples)
    for start in starts:
        xs = x[start:start + step]
        u1 = rng.random((len(xs), samples, m1.n_uniforms))
        u0 = rng.random((len(xs), samples, m0.n_uniforms))
        y1 = m1.draw(xs, grid, u1)
        y0 = m0.draw(xs, grid, u0)
        qw[start:start + len(xs)] = w(y1, y0).mean(axis=1)
        if w.tie_aware:
            ql[start:start + len(xs)] = 1.0 - qw[start:start + len(xs)]
        else:
            ql[start:start + len(xs)] = w_l(y1, y0).mean(axis=1)
    return qw, ql


def estimate_p(m_opposite, x, t, y, w, grid_size=DEFAULT_GRID_SIZE, samples=DEFAULT_SAMPLES, seed=0):
    """Monte-Carlo ``(p_w, p_l)`` for observations that all share treatment ``t``.

    For ``t = 1`` this averages ``w(y | Y(0, x))`` over draws from the control
    sampler; for ``t = 0`` it averages ``w(Y(1, x) | y)`` over treated draws.
    """
    require_bounded(w)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t_arr = np.unique(np.atleast_1d(t))
    if len(t_arr) != 1:
        raise ValueError("estimate_p expects a single treatment value; use estimate_p_both for mixed arms")
    arm = int(t_arr[0])
    y = np.asarray(y, dtype=float)
    if y.ndim == 2 and y.shape[1] == 1 and w.dim == 1:
        y = y[:, 0]
    rng, grid = _setup(grid_size, samples, seed)
    pw = np.empty(len(x))
    pl = np.empty(len(x))
    starts, step = _chunks(len(x), samples)
    for start in starts:
        sl = slice(start, start + step)
        xs = x[sl]
        draws = m_opposite.draw(xs, grid, rng.random((len(xs), samples, m_opposite.n_uniforms)))
        own = y[sl][:, None] if y.ndim == 1 else y[sl][:, None, :]
        if arm == 1:
            pw[sl], pl[sl] = w(own, draws).mean(axis=1), w(draws, own).mean(axis=1)
        else:
            pw[sl], pl[sl] = w(draws, own).mean(axis=1), w(own, draws).mean(axis=1)
    return pw, pl


def estimate_p_both(m1, m0, x, t, y, w, grid_size=DEFAULT_GRID_SIZE, samples=DEFAULT_SAMPLES, seed=0):
    x = np.atleast_2d(x)
    t = np.asarray(t).ravel()
    y = np.asarray(y, dtype=float)
    pw = np.empty(len(x))
    pl = np.empty(len(x))
    for arm, opposite in ((1, m0), (0, m1)):
        rows = np.flatnonzero(t == arm)
        if len(rows):
            pw[rows], pl[rows] = estimate_p(opposite, x[rows], arm, y[rows], w, grid_size, samples,
                                            seed=[int(seed), arm])
    return pw, pl


class KnnPrimary(BernoulliModel):
    """Probability of the binary primary outcome from a k-NN classifier."""

    def __init__(self, x, a, k=11):
        a = np.asarray(a, dtype=float)
        self.constant = None
        if np.all(a == a[0]):
            self.constant = float(a[0])
            return
        self.clf = KNeighborsClassifier(n_neighbors=min(k, len(a)))
        self.clf.fit(x, a.astype(int))
        self.pos = list(self.clf.classes_).index(1)

    def predict_proba(self, x):
        x = np.atleast_2d(x)
        if self.constant is not None:
            return np.full(len(x), self.constant)
        return self.clf.predict_proba(x)[:, self.pos]


def fit_factorized(x, y, fit_secondary, k=11):
    """Factorized d = 2 sampler: k-NN primary probability plus a secondary quantile model."""
    y = np.asarray(y, dtype=float)
    primary = y[:, 0]
    if not np.all(np.isin(primary, (0.0, 1.0))):
        raise ValueError("the factorized sampler needs a binary primary outcome")
    return FactorizedSampler(KnnPrimary(x, primary, k), fit_secondary(x, y[:, 1]))
