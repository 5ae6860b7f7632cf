"""Uniform construction of CPTE models from an estimator specification.

Every fitted model exposes ``predict(x) -> (q_w, q_l)``,
``p_hat(x, t, y) -> (p_w, p_l)`` and ``summary() -> dict``.
"""

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .._seeds import derive_seed
from ..data import outcome_column
from .baselines import MEAN_LEARNERS, baseline_mean_cpte
from .forest import fit_qrf_xy
from .knn import KnnCpte, k_schedule
from .linear_quantile import fit_linear_quantile_xy
from .sampling import DEFAULT_GRID_SIZE, DEFAULT_SAMPLES, algo1_estimate, estimate_p_both, fit_factorized

DISTRIBUTIONAL = ("knn", "linear_quantile", "qrf")
ESTIMATORS = DISTRIBUTIONAL + MEAN_LEARNERS + ("oracle",)


@dataclass(frozen=True)
class EstimatorSpec:
    """Estimator choice and its knobs.

    Attributes:
        kind: one of ``ESTIMATORS``.
        k: fixed neighbour count for ``knn`` (overrides ``k_rule``).
        k_rule: ``one``, ``log`` or ``2log``, applied to the training size.
        grid_size: random quantile levels for sampling estimators.
        samples: uniform pairs per query for sampling estimators.
        quantile_step: spacing of the fitted grid for ``linear_quantile``.
        forest: RandomForestRegressor overrides for ``qrf``.
        primary_k: neighbours of the primary-outcome classifier when d = 2.
        secondary: quantile model for the d = 2 secondary outcome.
    """

    kind: str = "knn"
    k: Optional[int] = None
    k_rule: str = "log"
    grid_size: int = DEFAULT_GRID_SIZE
    samples: int = DEFAULT_SAMPLES
    quantile_step: float = 0.025
    forest: Optional[dict] = None
    primary_k: int = 11
    secondary: str = "linear_quantile"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.kind!r}; expected one of {ESTIMATORS}")

    def quantile_grid(self):
        step = self.quantile_step
        return np.round(np.arange(step, 1.0 - step / 2, step), 10)

    def to_dict(self):
        return asdict(self)


class SamplingCpte:
    """CPTE model backed by two per-arm conditional samplers."""

    def __init__(self, m1, m0, w, grid_size=DEFAULT_GRID_SIZE, samples=DEFAULT_SAMPLES, seed=0, name="sampling"):
        self.m1, self.m0, self.w = m1, m0, w
        self.grid_size, self.samples, self.seed, self.name = grid_size, samples, seed, name

    def predict(self, x):
        return algo1_estimate(self.m1, self.m0, x, self.w, self.grid_size, self.samples, self.seed)

    def p_hat(self, x, t, y):
        return estimate_p_both(self.m1, self.m0, x, t, y, self.w, self.grid_size, self.samples,
                               derive_seed(self.seed, 1))

    def summary(self):
        return {"model": self.name, "grid_size": self.grid_size, "samples": self.samples,
                "treated": self.m1.summary(), "control": self.m0.summary()}


class OracleCpte:
    """Closed-form nuisances of a synthetic DGP (for oracle and smoke runs)."""

    name = "oracle"

    def __init__(self, oracle):
        self.oracle = oracle

    def predict(self, x):
        x = np.atleast_2d(x)
        return self.oracle.qw(x), self.oracle.ql(x)

    def p_hat(self, x, t, y):
        return self.oracle.pw(x, t, y), self.oracle.pl(x, t, y)

    def summary(self):
        return {"model": "oracle", "dgp": type(self.oracle).__name__}


def _sampler_fitter(kind, spec, seed):
    if kind == "linear_quantile":
        grid = spec.quantile_grid()
        return lambda x, y: fit_linear_quantile_xy(x, y, grid)
    if kind == "qrf":
        return lambda x, y: fit_qrf_xy(x, y, spec.forest, seed)
    raise ValueError(f"{kind!r} is not a quantile model")


def fit_cpte(spec, data, w, seed=0, oracle=None):
    """Fit the estimator described by ``spec`` on ``data``.

    Args:
        spec: EstimatorSpec (or a plain dict of its fields).
        data: training Dataset.
        w: preference function.
        seed: integer seed for any randomness in fitting or sampling.
        oracle: OracleDgp, required when ``spec.kind == "oracle"``.
    """
    if isinstance(spec, dict):
        spec = EstimatorSpec(**spec)
    if spec.kind == "oracle":
        if oracle is None:
            raise ValueError("the oracle estimator needs a DGP oracle")
        return OracleCpte(oracle)
    data.check_arms()
    if spec.kind == "knn":
        k = spec.k if spec.k is not None else k_schedule(data.n, spec.k_rule)
        return KnnCpte(data, w, k)
    if spec.kind in MEAN_LEARNERS:
        return baseline_mean_cpte(data, w, spec.kind, seed)
    fitter = _sampler_fitter(spec.kind, spec, seed)
    models = []
    for arm in (1, 0):
        idx = data.arm(arm)
        y = outcome_column(data.y[idx])
        if y.ndim == 2:
            secondary = _sampler_fitter(spec.secondary if spec.kind == "linear_quantile" else spec.kind, spec, seed)
            models.append(fit_factorized(data.x[idx], y, secondary, spec.primary_k))
        else:
            models.append(fitter(data.x[idx], y))
    return SamplingCpte(models[0], models[1], w, spec.grid_size, spec.samples, derive_seed(seed, 7), spec.kind)
