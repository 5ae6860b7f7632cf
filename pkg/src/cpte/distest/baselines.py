"""Mean-based (T-learner) baselines that plug conditional means into ``w``."""

import numpy as np
from sklearn.ensemble import RandomForestRegressor
from sklearn.linear_model import Ridge
from sklearn.neighbors import KNeighborsRegressor
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from ..data import outcome_column
from .forest import default_hyperparams
from .knn import k_schedule

MEAN_LEARNERS = ("knn_mean", "ridge", "forest_mean")
RIDGE_ALPHA = 1.0


def make_mean_learner(kind, n, seed=0):
    if kind == "ridge":
        return Ridge(alpha=RIDGE_ALPHA)
    if kind == "knn_mean":
        return make_pipeline(StandardScaler(), KNeighborsRegressor(n_neighbors=min(k_schedule(n), n)))
    if kind == "forest_mean":
        return RandomForestRegressor(random_state=int(seed) % (2**32), n_jobs=1, **default_hyperparams(n))
    raise ValueError(f"unknown mean learner {kind!r}; expected one of {MEAN_LEARNERS}")


class MeanCpte:
    """Plug-in of per-arm conditional means: ``q_w(x) = w(mu1(x) | mu0(x))``."""

    def __init__(self, mu1, mu0, w, name="mean"):
        self.mu1, self.mu0, self.w, self.name = mu1, mu0, w, name

    def means(self, x):
        x = np.atleast_2d(x)
        return self.mu1(x), self.mu0(x)

    def predict(self, x):
        m1, m0 = self.means(x)
        return np.asarray(self.w(m1, m0), float), np.asarray(self.w(m0, m1), float)

    def p_hat(self, x, t, y):
        m1, m0 = self.means(x)
        own = outcome_column(y)
        treated = np.asarray(t).ravel() == 1
        pw = np.where(treated, self.w(own, m0), self.w(m1, own))
        pl = np.where(treated, self.w(m0, own), self.w(own, m1))
        return pw.astype(float), pl.astype(float)

    def summary(self):
        return {"model": self.name, "preference": self.w.kind}


def _fit_mean(kind, x, y, seed):
    model = make_mean_learner(kind, len(y), seed)
    model.fit(x, y)

    def predict(q):
        out = model.predict(np.atleast_2d(q))
        return out[:, 0] if out.ndim == 2 and out.shape[1] == 1 else out

    return predict


def baseline_mean_cpte(data, w, learner="ridge", seed=0):
    """Fit the T-learner mean baseline.

    Args:
        data: training Dataset.
        w: preference function.
        learner: one of ``knn_mean``, ``ridge``, ``forest_mean``.
        seed: seed for the forest learner.

    Returns:
        MeanCpte
    """
    data.check_arms()
    fits = []
    for arm in (1, 0):
        idx = data.arm(arm)
        fits.append(_fit_mean(learner, data.x[idx], outcome_column(data.y[idx]), seed))
    return MeanCpte(fits[0], fits[1], w, name=learner)


def bernoulli_qw(p1, p0):
    """Strict-indicator CPTE for binary outcomes with success probabilities ``p1``, ``p0``."""
    return np.asarray(p1) * (1 - np.asarray(p0))
