"""Preference policy value: plug-in, influence function and one-step correction."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .policies import actions

PROPENSITY_CLAMP = (0.05, 0.95)


@dataclass
class NuisanceSet:
    """Per-observation nuisance values.

    Attributes:
        e: propensity estimates (clamped on use).
        qw, ql: CPTE estimates at each observation's covariates.
        pw, pl: correction terms at each observation's (x, t, y).
    """

    e: np.ndarray
    qw: np.ndarray
    ql: np.ndarray
    pw: np.ndarray
    pl: np.ndarray
    folds: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("e", "qw", "ql", "pw", "pl"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).ravel())

    def clamped_e(self):
        return np.clip(self.e, *PROPENSITY_CLAMP)


@dataclass
class PolicyValueEstimate:
    value: float
    method: str
    contributions: np.ndarray
    clipped: float = None

    def __post_init__(self):
        if self.clipped is None:
            self.clipped = float(np.clip(self.value, 0.0, 1.0))


def _resolve(q, x):
    if callable(q):
        return np.asarray(q(x), dtype=float)
    return np.broadcast_to(np.asarray(q, dtype=float), (len(x),))


def plugin_value(policy, qw, ql, eval_x):
    """Mean of ``pi(x) q_w(x) + (1 - pi(x)) q_l(x)`` over ``eval_x``.

    ``qw`` and ``ql`` are arrays aligned with ``eval_x`` or callables.
    """
    eval_x = np.atleast_2d(eval_x)
    a = actions(policy, eval_x)
    contrib = a * _resolve(qw, eval_x) + (1 - a) * _resolve(ql, eval_x)
    return PolicyValueEstimate(float(contrib.mean()), "plug_in", contrib)


def ipw_factor(t, e):
    """``1/e`` for treated units and ``1/(1-e)`` for controls (``e`` clamped)."""
    e = np.clip(np.asarray(e, dtype=float), *PROPENSITY_CLAMP)
    t = np.asarray(t).ravel()
    return np.where(t == 1, 1.0 / e, 1.0 / (1.0 - e))


def one_step_scores(nuis, t):
    """Per-observation scores ``(gamma_w, gamma_l)`` for treating and not treating.

    The one-step value of any policy is the mean of
    ``pi * gamma_w + (1 - pi) * gamma_l``.
    """
    f = ipw_factor(t, nuis.e)
    return nuis.qw + f * (nuis.pw - nuis.qw), nuis.ql + f * (nuis.pl - nuis.ql)


def eif_phi(policy, nuis, x, t, psi=None):
    """Influence-function values for the preference value of ``policy``.

    Args:
        policy: Policy, callable, or action vector.
        nuis: NuisanceSet aligned with the observations.
        x: covariates ``(n, p)``.
        t: treatment vector.
        psi: value at which to centre; defaults to the plug-in value.

    Returns:
        Array of length n.
    """
    a = actions(policy, x)
    plug = a * nuis.qw + (1 - a) * nuis.ql
    if psi is None:
        psi = plug.mean()
    resid = a * (nuis.pw - nuis.qw) + (1 - a) * (nuis.pl - nuis.ql)
    return plug - psi + ipw_factor(t, nuis.e) * resid


def one_step_value(policy, nuis, data):
    """Plug-in value plus the mean influence-function correction."""
    a = actions(policy, data.x)
    gw, gl = one_step_scores(nuis, data.t)
    contrib = a * gw + (1 - a) * gl
    return PolicyValueEstimate(float(contrib.mean()), "one_step", contrib)
