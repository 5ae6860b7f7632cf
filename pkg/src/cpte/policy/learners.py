"""Policy search: weighted linear classification and exhaustive shallow trees."""

import logging
import warnings

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .policies import LinearPolicy, TreePolicy
from .value import PROPENSITY_CLAMP

logger = logging.getLogger(__name__)

L2_PENALTY = 1e-8
MAX_ITER = 10_000
TOL = 1e-6
#: above this many candidate first-level splits the depth-2 search uses quantile-spaced candidates
MAX_FIRST_LEVEL = 2500
THINNED_FIRST_LEVEL = 512


class DegenerateScoresError(ValueError):
    """All score differences are zero, so no action is preferred anywhere."""


class ConvergenceWarning(UserWarning):
    pass


def weighted_logistic(x, labels, weights, penalty=L2_PENALTY, max_iter=MAX_ITER, tol=TOL):
    """Weighted logistic regression on standardised features.

    The loss is normalised by the total weight, so replicating every sample
    leaves the optimum unchanged.

    Returns:
        ``(coef, intercept)`` on the original feature scale.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.asarray(labels, dtype=float)
    weights = np.asarray(weights, dtype=float)
    wsum = weights.sum()
    mean = (weights @ x) / wsum
    scale = np.sqrt((weights @ (x - mean) ** 2) / wsum)
    scale = np.where(scale > 0, scale, 1.0)
    z = (x - mean) / scale
    sign = 2.0 * labels - 1.0
    wn = weights / wsum

    def loss(theta):
        m = sign * (z @ theta[1:] + theta[0])
        val = -(wn @ log_expit(m)) + 0.5 * penalty * theta[1:] @ theta[1:]
        g = -wn * sign * expit(-m)
        grad = np.concatenate([[g.sum()], z.T @ g + penalty * theta[1:]])
        return val, grad

    res = minimize(loss, np.zeros(z.shape[1] + 1), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-15})
    if not res.success and res.nit >= max_iter:
        warnings.warn(f"weighted logistic fit did not converge: {res.message}", ConvergenceWarning, stacklevel=2)
    coef = res.x[1:] / scale
    return coef, float(res.x[0] - coef @ mean)


def weighted_classification_fit(train_x, delta, seed=0):
    """Linear policy maximising the weighted agreement with ``sign(delta)``.

    Args:
        train_x: covariates ``(n, p)``.
        delta: per-sample score differences; label ``delta > 0``, weight ``|delta|``.
        seed: unused by the deterministic solver; accepted for interface symmetry.

    Returns:
        LinearPolicy
    """
    delta = np.asarray(delta, dtype=float).ravel()
    keep = delta != 0
    if not keep.any():
        raise DegenerateScoresError("degenerate scores: every score difference is zero")
    coef, intercept = weighted_logistic(np.atleast_2d(train_x)[keep], delta[keep] > 0, np.abs(delta[keep]))
    return LinearPolicy(coef, intercept)


def _leaf(gw, gl):
    # ties go to control
    return {"action": int(gw > gl)}


def _best_leaf_value(sw, sl):
    return np.maximum(sw, sl)


def _split_positions(values_sorted):
    """Indices ``i`` such that a split between sorted positions i and i+1 separates distinct values."""
    return np.flatnonzero(np.diff(values_sorted) > 0)


def _midpoint(values_sorted, i):
    return float(0.5 * (values_sorted[i] + values_sorted[i + 1]))


def _depth1(x, gw, gl):
    """Best single split; returns (value, node). Scan order: features, then thresholds."""
    tw, tl = gw.sum(), gl.sum()
    best_val = _best_leaf_value(tw, tl)
    best = _leaf(tw, tl)
    found_split = False
    for j in range(x.shape[1]):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        pos = _split_positions(xs)
        if not len(pos):
            continue
        cw, cl = np.cumsum(gw[order])[pos], np.cumsum(gl[order])[pos]
        vals = _best_leaf_value(cw, cl) + _best_leaf_value(tw - cw, tl - cl)
        i = int(np.argmax(vals))
        if not found_split or vals[i] > best_val:
            found_split = True
            best_val = vals[i]
            best = {"feature": j, "threshold": _midpoint(xs, pos[i]),
                    "left": _leaf(cw[i], cl[i]), "right": _leaf(tw - cw[i], tl - cl[i])}
    return float(best_val), best


def _child_search(rank_j, cand, order_k, xs_k, pos_k, gw, gl, n):
    """For each first-level candidate, best depth-1 subtree on feature k for both children.

    Returns arrays (left_val, left_idx, right_val, right_idx) where idx = -1 means leaf.
    """
    r = rank_j[order_k]
    below = r[None, :] <= cand[:, None]  # (A, n) membership of the left child, in k order
    lw = np.cumsum(np.where(below, gw[order_k], 0.0), axis=1)
    ll = np.cumsum(np.where(below, gl[order_k], 0.0), axis=1)
    tw, tl = gw.sum(), gl.sum()
    lw_tot, ll_tot = lw[:, -1:], ll[:, -1:]
    cw_all, cl_all = np.cumsum(gw[order_k]), np.cumsum(gl[order_k])
    rw, rl = cw_all[None, :] - lw, cl_all[None, :] - ll
    rw_tot, rl_tot = tw - lw_tot, tl - ll_tot

    out = []
    for aw, al, aw_tot, al_tot in ((lw, ll, lw_tot, ll_tot), (rw, rl, rw_tot, rl_tot)):
        leaf_val = _best_leaf_value(aw_tot[:, 0], al_tot[:, 0])
        if len(pos_k):
            sw, sl = aw[:, pos_k], al[:, pos_k]
            vals = _best_leaf_value(sw, sl) + _best_leaf_value(aw_tot - sw, al_tot - sl)
            idx = np.argmax(vals, axis=1)
            best = vals[np.arange(len(cand)), idx]
            use_split = best > leaf_val
            out += [np.where(use_split, best, leaf_val), np.where(use_split, idx, -1)]
        else:
            out += [leaf_val, np.full(len(cand), -1)]
    return out


def _subtree(x, gw, gl, mask, feature, threshold):
    if feature is None:
        return _leaf(gw[mask].sum(), gl[mask].sum())
    left = mask & (x[:, feature] <= threshold)
    right = mask & ~(x[:, feature] <= threshold)
    return {"feature": feature, "threshold": threshold,
            "left": _leaf(gw[left].sum(), gl[left].sum()), "right": _leaf(gw[right].sum(), gl[right].sum())}


def _depth2(x, gw, gl):
    n, p = x.shape
    best_val, best = _depth1(x, gw, gl)
    orders = [np.argsort(x[:, k], kind="stable") for k in range(p)]
    sorted_vals = [x[o, k] for k, o in enumerate(orders)]
    positions = [_split_positions(v) for v in sorted_vals]
    for j in range(p):
        pos_j = positions[j]
        if not len(pos_j):
            continue
        cand = pos_j
        if len(cand) > MAX_FIRST_LEVEL:
            cand = pos_j[np.unique(np.linspace(0, len(pos_j) - 1, THINNED_FIRST_LEVEL).round().astype(int))]
        rank_j = np.empty(n, dtype=np.int64)
        rank_j[orders[j]] = np.arange(n)
        left_best = np.full(len(cand), -np.inf)
        right_best = np.full(len(cand), -np.inf)
        left_arg = [(None, -1)] * len(cand)
        right_arg = [(None, -1)] * len(cand)
        for k in range(p):
            lv, li, rv, ri = _child_search(rank_j, cand, orders[k], sorted_vals[k], positions[k], gw, gl, n)
            for vals, idx, cur, arg in ((lv, li, left_best, left_arg), (rv, ri, right_best, right_arg)):
                better = vals > cur
                cur[better] = vals[better]
                for a in np.flatnonzero(better):
                    arg[a] = (k, int(idx[a]))
        total = left_best + right_best
        a = int(np.argmax(total))
        if total[a] > best_val:
            best_val = total[a]
            thr = _midpoint(sorted_vals[j], cand[a])
            left_mask = x[:, j] <= thr
            nodes = []
            for mask, (k, idx) in ((left_mask, left_arg[a]), (~left_mask, right_arg[a])):
                if idx < 0:
                    nodes.append(_subtree(x, gw, gl, mask, None, None))
                else:
                    nodes.append(_subtree(x, gw, gl, mask, k, _midpoint(sorted_vals[k], positions[k][idx])))
            best = {"feature": j, "threshold": thr, "left": nodes[0], "right": nodes[1]}
    return float(best_val), best


def _prune(node):
    if "action" in node:
        return node
    left, right = _prune(node["left"]), _prune(node["right"])
    if "action" in left and "action" in right and left["action"] == right["action"]:
        return {"action": left["action"]}
    return {**node, "left": left, "right": right}


def policy_tree_fit(train_x, gamma_w, gamma_l, depth=2):
    """Exhaustive search for the tree maximising the summed leaf scores.

    Each leaf takes the action whose summed score (``gamma_w`` for treat,
    ``gamma_l`` for control) is larger; ties go to control and, among equal
    trees, the first in scan order wins.

    Args:
        train_x: covariates ``(n, p)``.
        gamma_w: per-sample scores for treating.
        gamma_l: per-sample scores for not treating.
        depth: 1 or 2.

    Returns:
        TreePolicy with the achieved objective in ``objective``.
    """
    x = np.atleast_2d(np.asarray(train_x, dtype=float))
    gw = np.asarray(gamma_w, dtype=float).ravel()
    gl = np.asarray(gamma_l, dtype=float).ravel()
    if depth not in (1, 2):
        raise ValueError("tree depth must be 1 or 2")
    val, root = (_depth1 if depth == 1 else _depth2)(x, gw, gl)
    policy = TreePolicy(_prune(root))
    policy.objective = val
    return policy


def fit_propensity(data, mode="fit"):
    """Propensity model ``e(x)`` clamped to [0.05, 0.95].

    Args:
        data: Dataset.
        mode: ``fit`` (weighted logistic on all covariates), ``fixed`` (0.5),
            or ``oracle`` (the dataset's stored true propensity, training rows only).

    Returns:
        Callable ``e(x)``.
    """
    if mode == "fixed":
        return lambda x: np.full(len(np.atleast_2d(x)), 0.5)
    data.check_arms()
    if mode == "oracle":
        raise ValueError("oracle propensity is supplied by the DGP, not fitted")
    if mode != "fit":
        raise ValueError(f"unknown propensity mode {mode!r}")
    coef, intercept = weighted_logistic(data.x, data.t == 1, np.ones(data.n))
    return lambda x: np.clip(expit(np.atleast_2d(x) @ coef + intercept), *PROPENSITY_CLAMP)
