"""Cross-fitted nuisances and one-step policy learning."""

import logging

import numpy as np

from .._seeds import derive_seed
from ..data import DegenerateDataError
from ..distest.registry import EstimatorSpec, fit_cpte
from .learners import DegenerateScoresError, fit_propensity, policy_tree_fit, weighted_classification_fit
from .value import NuisanceSet, one_step_scores

logger = logging.getLogger(__name__)

PROPENSITY_MODES = ("fit", "fixed", "oracle")
POLICY_CLASSES = ("linear", "tree")


def _folds_ok(t, folds, k):
    for f in range(k):
        train = t[folds != f]
        if not (np.any(train == 0) and np.any(train == 1)):
            return False
    return True


def make_folds(t, k, seed):
    """Deterministic fold labels; re-stratified by arm if a training part lacks an arm."""
    t = np.asarray(t).ravel()
    n = len(t)
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= K <= n, got K={k}, n={n}")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=int)
    folds[rng.permutation(n)] = np.arange(n) % k
    if _folds_ok(t, folds, k):
        return folds
    logger.info("a cross-fitting fold lacks an arm; re-stratifying by treatment")
    offset = 0
    for arm in (0, 1):
        idx = np.flatnonzero(t == arm)
        folds[idx[rng.permutation(len(idx))]] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    if not _folds_ok(t, folds, k):
        raise DegenerateDataError("cannot build folds whose training parts contain both arms")
    return folds


def _propensity_values(train, test, mode, oracle):
    if mode == "oracle":
        if oracle is not None:
            return oracle.propensity(test.x)
        if test.propensity is None:
            raise ValueError("oracle propensity requested but the data carries none")
        return test.propensity
    return fit_propensity(train, mode)(test.x)


def fit_nuisances(train, test, spec, w, seed=0, propensity="fit", oracle=None):
    """Nuisances for the rows of ``test`` from models fitted on ``train``."""
    if propensity not in PROPENSITY_MODES:
        raise ValueError(f"unknown propensity mode {propensity!r}; expected one of {PROPENSITY_MODES}")
    model = fit_cpte(spec, train, w, seed=seed, oracle=oracle)
    qw, ql = model.predict(test.x)
    pw, pl = model.p_hat(test.x, test.t, test.y)
    e = _propensity_values(train, test, propensity, oracle)
    return NuisanceSet(e, qw, ql, pw, pl), model


def cross_fit_nuisances(data, spec, w, k=5, seed=0, propensity="fit", oracle=None):
    """K-fold out-of-fold nuisances for every unit.

    Args:
        data: Dataset.
        spec: EstimatorSpec (or dict).
        w: bounded preference function.
        k: number of folds (2 <= k <= n).
        seed: fold and fitting seed.
        propensity: ``fit``, ``fixed`` (0.5) or ``oracle``.
        oracle: DGP oracle for the ``oracle`` estimator or propensity.

    Returns:
        NuisanceSet with fold labels.
    """
    if isinstance(spec, dict):
        spec = EstimatorSpec(**spec)
    data.check_arms()
    folds = make_folds(data.t, k, derive_seed(seed, 0xF01D))
    n = data.n
    cols = {name: np.empty(n) for name in ("e", "qw", "ql", "pw", "pl")}
    for f in range(k):
        test_idx = np.flatnonzero(folds == f)
        train_idx = np.flatnonzero(folds != f)
        nuis, _ = fit_nuisances(data.subset(train_idx), data.subset(test_idx), spec, w,
                                seed=derive_seed(seed, f), propensity=propensity, oracle=oracle)
        for name in cols:
            cols[name][test_idx] = getattr(nuis, name)
    return NuisanceSet(**cols, folds=folds, meta={"k": k, "estimator": spec.kind})


def fit_policy_from_scores(x, gamma_w, gamma_l, policy_class="tree", depth=2, seed=0):
    if policy_class not in POLICY_CLASSES:
        raise ValueError(f"unknown policy class {policy_class!r}; expected one of {POLICY_CLASSES}")
    diff = np.asarray(gamma_w) - np.asarray(gamma_l)
    if not np.any(diff != 0):
        raise DegenerateScoresError("degenerate scores: treat and control scores coincide for every unit")
    if policy_class == "linear":
        return weighted_classification_fit(x, diff, seed)
    return policy_tree_fit(x, gamma_w, gamma_l, depth)


def one_step_policy_fit(data, spec, w, policy_class="tree", seed=0, k=5, propensity="fit", oracle=None, depth=2):
    """Maximise the one-step value over a policy class using cross-fitted scores.

    Returns:
        ``(policy, nuisances)``.
    """
    nuis = cross_fit_nuisances(data, spec, w, k, seed, propensity, oracle)
    gw, gl = one_step_scores(nuis, data.t)
    return fit_policy_from_scores(data.x, gw, gl, policy_class, depth, seed), nuis


def plugin_policy_fit(data, model, policy_class="tree", seed=0, depth=2):
    """Maximise the plug-in value over a policy class with a fitted CPTE model."""
    qw, ql = model.predict(data.x)
    return fit_policy_from_scores(data.x, qw, ql, policy_class, depth, seed)
