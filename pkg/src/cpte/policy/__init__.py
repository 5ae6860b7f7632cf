"""Policies, preference policy values and policy learning."""

from .crossfit import (cross_fit_nuisances, fit_nuisances, fit_policy_from_scores, make_folds,
                       one_step_policy_fit, plugin_policy_fit)
from .learners import (DegenerateScoresError, fit_propensity, policy_tree_fit, weighted_classification_fit,
                       weighted_logistic)
from .policies import (ComplementPolicy, ConstantPolicy, LinearPolicy, OraclePolicy, Policy, ThresholdPolicy,
                       TreePolicy, actions, policy_from_record)
from .value import (NuisanceSet, PolicyValueEstimate, eif_phi, ipw_factor, one_step_scores, one_step_value,
                    plugin_value)


def otr_plugin(model):
    """Threshold policy ``1{q_w(x) - q_l(x) > 0}`` for a fitted CPTE model (or a ``predict`` callable)."""
    if callable(model) and not hasattr(model, "predict"):
        class _Wrapped:
            predict = staticmethod(model)
        model = _Wrapped()
    return ThresholdPolicy(model)


__all__ = [
    "ComplementPolicy", "ConstantPolicy", "DegenerateScoresError", "LinearPolicy", "NuisanceSet", "OraclePolicy",
    "Policy", "PolicyValueEstimate", "ThresholdPolicy", "TreePolicy", "actions", "cross_fit_nuisances",
    "eif_phi", "fit_nuisances", "fit_policy_from_scores", "fit_propensity", "ipw_factor", "make_folds",
    "one_step_policy_fit", "one_step_scores", "one_step_value", "otr_plugin", "plugin_policy_fit",
    "plugin_value", "policy_from_record", "policy_tree_fit", "weighted_classification_fit", "weighted_logistic",
]
