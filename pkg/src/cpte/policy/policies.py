"""Deterministic treatment policies and their JSON records."""

import json

import numpy as np


class Policy:
    """Maps covariate rows to actions in {0, 1}."""

    variant = "base"

    def __call__(self, x):
        return self.act(np.atleast_2d(np.asarray(x, dtype=float)))

    def act(self, x):
        raise NotImplementedError

    def to_record(self):
        raise NotImplementedError

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=True, indent=2)


class ConstantPolicy(Policy):
    variant = "constant"

    def __init__(self, action):
        self.action = int(action)

    def act(self, x):
        return np.full(len(x), self.action, dtype=int)

    def to_record(self):
        return {"variant": self.variant, "action": self.action}


class ThresholdPolicy(Policy):
    """Treat iff ``q_w(x) - q_l(x) > 0``; exact zeros go to control."""

    variant = "threshold"

    def __init__(self, model):
        self.model = model

    def delta(self, x):
        qw, ql = self.model.predict(x)
        return np.asarray(qw) - np.asarray(ql)

    def act(self, x):
        return (self.delta(x) > 0).astype(int)

    def to_record(self):
        summary = self.model.summary() if hasattr(self.model, "summary") else {}
        return {"variant": self.variant, "rule": "delta > 0", "tie_break": "control", "estimator": summary}


class LinearPolicy(Policy):
    """Treat iff ``x @ weights + intercept > 0``."""

    variant = "linear"

    def __init__(self, weights, intercept):
        self.weights = np.asarray(weights, dtype=float)
        self.intercept = float(intercept)

    def score(self, x):
        return np.atleast_2d(x) @ self.weights + self.intercept

    def act(self, x):
        return (self.score(x) > 0).astype(int)

    def to_record(self):
        return {"variant": self.variant, "weights": [float(v) for v in self.weights],
                "intercept": self.intercept, "tie_break": "control"}


class TreePolicy(Policy):
    """Axis-aligned tree; ``x[feature] <= threshold`` goes left.

    A node is either ``{"action": a}`` or
    ``{"feature": j, "threshold": s, "left": node, "right": node}``.
    """

    variant = "tree"

    def __init__(self, root):
        self.root = root

    def act(self, x):
        return _eval_node(self.root, x, np.arange(len(x)), np.empty(len(x), dtype=int))

    @property
    def depth(self):
        return _depth(self.root)

    def to_record(self):
        return {"variant": self.variant, "root": self.root, "rule": "x[feature] <= threshold goes left"}


def _eval_node(node, x, rows, out):
    if "action" in node:
        out[rows] = node["action"]
        return out
    left = x[rows, node["feature"]] <= node["threshold"]
    _eval_node(node["left"], x, rows[left], out)
    _eval_node(node["right"], x, rows[~left], out)
    return out


def _depth(node):
    if "action" in node:
        return 0
    return 1 + max(_depth(node["left"]), _depth(node["right"]))


class ComplementPolicy(Policy):
    variant = "complement"

    def __init__(self, base):
        self.base = base

    def act(self, x):
        return 1 - self.base.act(x)

    def to_record(self):
        return {"variant": self.variant, "base": self.base.to_record()}


class OraclePolicy(Policy):
    """Optimal policy of a synthetic DGP."""

    variant = "oracle"

    def __init__(self, oracle):
        self.oracle = oracle

    def act(self, x):
        return self.oracle.optimal_action(x).astype(int)

    def to_record(self):
        return {"variant": self.variant, "dgp": type(self.oracle).__name__}


def policy_from_record(record):
    """Rebuild a constant, linear, tree or complement policy from its record."""
    if isinstance(record, str):
        record = json.loads(record)
    variant = record["variant"]
    if variant == "constant":
        return ConstantPolicy(record["action"])
    if variant == "linear":
        return LinearPolicy(record["weights"], record["intercept"])
    if variant == "tree":
        return TreePolicy(record["root"])
    if variant == "complement":
        return ComplementPolicy(policy_from_record(record["base"]))
    raise ValueError(f"policy variant {variant!r} cannot be rebuilt from its record alone")


def actions(policy, x):
    """Action vector for ``policy`` given as a Policy, callable, array or scalar."""
    x = np.atleast_2d(x)
    if isinstance(policy, Policy) or callable(policy):
        return np.asarray(policy(x)).astype(int)
    a = np.asarray(policy)
    if a.ndim == 0:
        return np.full(len(x), int(a))
    return a.astype(int)
