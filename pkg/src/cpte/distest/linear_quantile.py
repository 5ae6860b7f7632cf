"""Linear quantile regression on a fixed quantile grid.

Each grid quantile is fitted exactly by the dual of the pinball-loss linear
program (solved with the HiGHS dual simplex); the primal coefficients are the
equality-constraint multipliers. Predicted quantiles are rearranged
(sorted across the grid) so that curves never cross.
"""

import warnings

import numpy as np
from scipy.linalg import qr
from scipy.optimize import linprog

from ..data import outcome_column
from .samplers import ConditionalSampler, interp_rows

DEFAULT_GRID = np.round(np.arange(0.025, 0.9751, 0.025), 6)


class RankDeficientWarning(UserWarning):
    pass


def pinball_loss(r, q):
    r = np.asarray(r, dtype=float)
    return float(np.mean(r * (q - (r < 0))))


def _independent_columns(z, tol=1e-10):
    _, r, piv = qr(z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > tol * max(diag[0], 1.0))) if len(diag) else 0
    return np.sort(piv[:rank])


def quantile_coefficients(z, y, q):
    """Exact minimiser of the mean pinball loss of ``y - z @ beta`` at level ``q``.

    ``z`` must have full column rank.
    """
    n = len(y)
    b_eq = (1.0 - q) * z.sum(axis=0)
    res = linprog(-y, A_eq=z.T, b_eq=b_eq, bounds=(0.0, 1.0), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"quantile LP at q={q} failed: {res.message}")
    beta = -np.asarray(res.eqlin.marginals, dtype=float)
    if not np.all(np.isfinite(beta)):
        raise RuntimeError(f"quantile LP at q={q} returned non-finite coefficients (n={n})")
    return beta


class LinearQuantileModel(ConditionalSampler):
    """Per-quantile linear coefficients (intercept first) on ``grid``."""

    name = "linear_quantile"

    def __init__(self, grid, coef):
        self.grid = np.asarray(grid, dtype=float)
        self.coef = np.asarray(coef, dtype=float)

    def grid_predictions(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pred = self.coef[:, 0][None, :] + x @ self.coef[:, 1:].T
        # monotone rearrangement across the grid
        return np.sort(pred, axis=1)

    def quantile(self, x, q):
        table = self.grid_predictions(x)
        q = np.atleast_1d(np.asarray(q, dtype=float))
        u = np.broadcast_to(q, (len(table), len(q)))
        return interp_rows(self.grid, table, np.ascontiguousarray(u))

    def summary(self):
        return {"model": "linear_quantile", "grid": self.grid.tolist(), "coef": self.coef.tolist()}


def fit_linear_quantile_xy(x, y, grid=DEFAULT_GRID):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    grid = np.sort(np.atleast_1d(np.asarray(grid, dtype=float)))
    if not len(y):
        raise ValueError("cannot fit a quantile model on an empty arm")
    if np.any((grid <= 0) | (grid >= 1)):
        raise ValueError("quantile grid must lie inside (0, 1)")
    z = np.column_stack([np.ones(len(y)), x])
    keep = _independent_columns(z)
    if len(keep) < z.shape[1]:
        dropped = sorted(set(range(z.shape[1])) - set(keep.tolist()))
        warnings.warn(f"design is rank deficient; dropping columns {dropped} (0 = intercept)",
                      RankDeficientWarning, stacklevel=2)
    coef = np.zeros((len(grid), z.shape[1]))
    if np.all(y == y[0]):
        coef[:, 0] = y[0]
        return LinearQuantileModel(grid, coef)
    for g, q in enumerate(grid):
        coef[g, keep] = quantile_coefficients(z[:, keep], y, q)
    return LinearQuantileModel(grid, coef)


def fit_linear_quantile(data, arm, quantile_grid=DEFAULT_GRID):
    """Fit linear quantile regressions of the outcome on covariates within one arm.

    Args:
        data: a :class:`~cpte.data.Dataset` with a scalar outcome.
        arm: 0 or 1.
        quantile_grid: levels in (0, 1).

    Returns:
        LinearQuantileModel
    """
    idx = data.arm(arm)
    y = outcome_column(data.y[idx])
    if y.ndim != 1:
        raise ValueError("linear quantile regression needs a scalar outcome; use the factorized sampler for d = 2")
    return fit_linear_quantile_xy(data.x[idx], y, quantile_grid)
