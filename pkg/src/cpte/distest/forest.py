"""Quantile regression forest: leaf-weighted empirical CDF over a bagged forest."""

import numpy as np
from scipy import sparse
from sklearn.ensemble import RandomForestRegressor

from ..data import outcome_column
from .samplers import ConditionalSampler


def default_hyperparams(n):
    """Forest settings by training-set size."""
    if n >= 10000:
        return {"max_depth": 25, "max_features": 0.35, "min_samples_split": 5, "n_estimators": 500}
    if n > 100:
        return {"max_depth": 15, "max_features": 0.50, "min_samples_split": 7, "n_estimators": 400}
    return {"max_depth": 15, "max_features": 0.60, "min_samples_split": 5, "n_estimators": 50}


class ForestQuantileModel(ConditionalSampler):
    name = "qrf"

    def __init__(self, forest, x, y, hyperparams):
        self.forest = forest
        self.hyperparams = dict(hyperparams)
        self.order = np.argsort(y, kind="stable")
        self.y_sorted = y[self.order]
        leaves = forest.apply(x)  # (n, trees)
        self._offsets, self._train = self._leaf_matrix(leaves)
        self.n_trees = leaves.shape[1]

    def _leaf_matrix(self, leaves):
        n, n_trees = leaves.shape
        offsets = np.zeros(n_trees + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([est.tree_.node_count for est in self.forest.estimators_])
        cols = leaves + offsets[:-1][None, :]
        mat = sparse.csr_matrix((np.ones(n * n_trees), (np.repeat(np.arange(n), n_trees), cols.ravel())),
                                shape=(n, offsets[-1]))
        counts = np.asarray(mat.sum(axis=0)).ravel()
        inv = np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)
        # rows in sorted-outcome order so cumulative weights follow the ECDF
        return offsets, (mat @ sparse.diags(inv)).tocsr()[self.order]

    def weights(self, x):
        """Leaf co-membership weights, ``(m, n)`` in sorted-outcome order; rows sum to 1."""
        leaves = self.forest.apply(np.atleast_2d(x))
        m, n_trees = leaves.shape
        cols = leaves + self._offsets[:-1][None, :]
        query = sparse.csr_matrix((np.full(m * n_trees, 1.0 / n_trees), (np.repeat(np.arange(m), n_trees), cols.ravel())),
                                  shape=(m, self._offsets[-1]))
        return (query @ self._train.T).toarray()

    def quantile(self, x, q, chunk=256):
        x = np.atleast_2d(x)
        q = np.atleast_1d(np.asarray(q, dtype=float))
        out = np.empty((len(x), len(q)))
        for start in range(0, len(x), chunk):
            cum = np.cumsum(self.weights(x[start:start + chunk]), axis=1)
            cum /= cum[:, -1:]
            for i, row in enumerate(cum):
                pos = np.searchsorted(row, q - 1e-12, side="left")
                out[start + i] = self.y_sorted[np.minimum(pos, len(row) - 1)]
        return out

    def summary(self):
        return {"model": "qrf", "hyperparams": self.hyperparams, "n_train": len(self.y_sorted)}


def fit_qrf_xy(x, y, hyperparams=None, seed=0):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if not len(y):
        raise ValueError("cannot fit a forest on an empty arm")
    hp = default_hyperparams(len(y)) if hyperparams is None else dict(hyperparams)
    forest = RandomForestRegressor(bootstrap=True, random_state=int(seed) % (2**32), n_jobs=1, **hp)
    forest.fit(x, y)
    return ForestQuantileModel(forest, x, y, hp)


def fit_qrf(data, arm, hyperparams=None, seed=0):
    """Quantile regression forest for one arm.

    Args:
        data: Dataset with a scalar outcome.
        arm: 0 or 1.
        hyperparams: RandomForestRegressor keyword overrides; size-based defaults otherwise.
        seed: bootstrap and feature-sampling seed.
    """
    idx = data.arm(arm)
    y = outcome_column(data.y[idx])
    if y.ndim != 1:
        raise ValueError("the forest sampler needs a scalar outcome; use the factorized sampler for d = 2")
    return fit_qrf_xy(data.x[idx], y, hyperparams, seed)
