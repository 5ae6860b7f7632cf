"""Distributional conditional-outcome models and CPTE estimators."""

from .baselines import MeanCpte, baseline_mean_cpte, bernoulli_qw
from .forest import ForestQuantileModel, fit_qrf, fit_qrf_xy
from .knn import KnnCpte, k_schedule, knn_cate, knn_cpte, nearest
from .linear_quantile import LinearQuantileModel, fit_linear_quantile, fit_linear_quantile_xy, pinball_loss
from .registry import ESTIMATORS, EstimatorSpec, OracleCpte, SamplingCpte, fit_cpte
from .samplers import ConditionalSampler, ConstantSampler, FactorizedSampler, FunctionSampler, NonMonotoneError
from .sampling import algo1_estimate, estimate_p, estimate_p_both

__all__ = [
    "ConditionalSampler", "ConstantSampler", "ESTIMATORS", "EstimatorSpec", "FactorizedSampler",
    "ForestQuantileModel", "FunctionSampler", "KnnCpte", "LinearQuantileModel", "MeanCpte",
    "NonMonotoneError", "OracleCpte", "SamplingCpte", "algo1_estimate", "baseline_mean_cpte",
    "bernoulli_qw", "estimate_p", "estimate_p_both", "fit_cpte", "fit_linear_quantile",
    "fit_linear_quantile_xy", "fit_qrf", "fit_qrf_xy",
    "k_schedule", "knn_cate", "knn_cpte", "nearest", "pinball_loss",
]
