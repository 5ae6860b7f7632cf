"""Experiment grids: repeated training, oracle evaluation, bootstrap summaries."""

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import synthgen
from ._seeds import derive_seed
from .distest.registry import EstimatorSpec, fit_cpte
from .policy import (OraclePolicy, actions, cross_fit_nuisances, one_step_policy_fit, one_step_value, otr_plugin,
                     plugin_policy_fit, plugin_value)
from .preference import lexicographic_win, pns

logger = logging.getLogger(__name__)

METHODS = ("otr_plugin", "plugin_optim", "one_step_optim")
RESULT_COLUMNS = ("estimator", "policy_method", "n", "repetition", "oracle_value", "plug_in_value",
                  "one_step_value", "agreement_with_oracle", "error")
SWEEP_COLUMNS = ("estimator", "n", "repetition", "plug_in_value", "one_step_value", "oracle_value", "ite_value",
                 "error")

# reserved derivation tags; training seeds use (n-index, repetition) pairs
_EVAL_TAG = 0xE7A1
_BETA_TAG = 0xBE7A


@dataclass
class ExperimentConfig:
    """Grid specification.

    Attributes:
        dgp: SyntheticConfig or HierarchicalConfig template; ``n`` and seeds are overridden per cell.
        estimators: EstimatorSpec list.
        methods: subset of ``METHODS``.
        n_grid: training sizes.
        repetitions: repetitions per size.
        eval_n: held-out evaluation size.
        master_seed: root of all derived seeds.
        bootstrap_b: bootstrap resamples for summaries.
        policy_class: ``tree`` or ``linear`` for the optimisation methods.
        tree_depth: 1 or 2.
        crossfit_k: folds for one-step nuisances.
        propensity: ``fit``, ``fixed`` or ``oracle``.
        preference: PreferenceFunction; defaults to the DGP's natural rule.
        evaluate_one_step: also report cross-fitted one-step value estimates for every cell.
        threads: worker threads over grid cells.
    """

    dgp: object = field(default_factory=synthgen.SyntheticConfig)
    estimators: list = field(default_factory=lambda: [EstimatorSpec("knn")])
    methods: list = field(default_factory=lambda: ["otr_plugin"])
    n_grid: list = field(default_factory=lambda: [30, 100, 1000, 10000])
    repetitions: int = 50
    eval_n: int = 10000
    master_seed: int = 0
    bootstrap_b: int = 1000
    policy_class: str = "tree"
    tree_depth: int = 1
    crossfit_k: int = 5
    propensity: str = "fit"
    preference: object = None
    evaluate_one_step: bool = False
    threads: int = 1

    def __post_init__(self):
        self.estimators = [EstimatorSpec(**e) if isinstance(e, dict) else e for e in self.estimators]
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown policy methods {bad}; expected a subset of {METHODS}")
        if self.preference is None:
            hier = isinstance(self.dgp, synthgen.HierarchicalConfig)
            self.preference = lexicographic_win() if hier else pns()

    def beta_seed(self):
        return derive_seed(self.master_seed, _BETA_TAG)

    def eval_seed(self):
        return derive_seed(self.master_seed, _EVAL_TAG)

    def train_seed(self, n_index, repetition):
        return derive_seed(self.master_seed, n_index, repetition)

    def train_seeds(self):
        return [self.train_seed(i, r) for i in range(len(self.n_grid)) for r in range(self.repetitions)]

    def dgp_for(self, n, seed):
        return replace(self.dgp, n=n, seed=seed, beta_seed=self.beta_seed())


@dataclass
class ExperimentResult:
    rows: list
    timings: list
    config: ExperimentConfig

    def column(self, name, **where):
        return np.array([r[name] for r in self.rows if all(r[k] == v for k, v in where.items())], dtype=float)


def eval_covariates(cfg):
    seeds = set(cfg.train_seeds())
    eval_seed = cfg.eval_seed()
    if eval_seed in seeds:
        raise RuntimeError("evaluation seed collides with a training seed")
    return synthgen.gen_features(cfg.dgp_for(cfg.eval_n, eval_seed))


def policy_agreement(policy, reference, eval_x):
    """Fraction of evaluation points where the two policies take the same action."""
    return float(np.mean(actions(policy, eval_x) == actions(reference, eval_x)))


def bootstrap_ci(values, b=1000, level=0.95, seed=0):
    """Percentile bootstrap interval for the mean of ``values``."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if len(values) < 2:
        raise ValueError("bootstrap needs at least two values")
    if np.all(values == values[0]):
        return float(values[0]), float(values[0])
    rng = np.random.default_rng(seed)
    means = values[rng.integers(0, len(values), (b, len(values)))].mean(axis=1)
    alpha = (1.0 - level) / 2
    lo, hi = np.quantile(means, [alpha, 1 - alpha])
    return float(lo), float(hi)


def _cell(cfg, n_index, rep, eval_x):
    n = cfg.n_grid[n_index]
    seed = cfg.train_seed(n_index, rep)
    dgp = cfg.dgp_for(n, seed)
    data = synthgen.make_dataset(dgp)
    oracle = synthgen.make_oracle(dgp)
    star = OraclePolicy(oracle)
    w = cfg.preference
    rows, timings = [], []
    for spec in cfg.estimators:
        model = None
        fit_error = None
        fit_start = time.perf_counter()
        needs_model = any(m in ("otr_plugin", "plugin_optim") for m in cfg.methods)
        if needs_model:
            try:
                model = fit_cpte(spec, data, w, seed=derive_seed(seed, 11), oracle=oracle)
            except Exception as exc:  # recorded as an error row
                fit_error = f"{type(exc).__name__}: {exc}"
        train_q = model.predict(data.x) if model is not None else None
        fit_time = time.perf_counter() - fit_start
        nuis = None
        for method in cfg.methods:
            row = {"estimator": spec.kind, "policy_method": method, "n": n, "repetition": rep,
                   "oracle_value": np.nan, "plug_in_value": np.nan, "one_step_value": np.nan,
                   "agreement_with_oracle": np.nan, "error": ""}
            t0 = time.perf_counter()
            try:
                if method != "one_step_optim" and fit_error:
                    raise RuntimeError(fit_error)
                if method == "otr_plugin":
                    policy = otr_plugin(model)
                elif method == "plugin_optim":
                    policy = plugin_policy_fit(data, model, cfg.policy_class, seed, cfg.tree_depth)
                else:
                    policy, nuis = one_step_policy_fit(data, spec, w, cfg.policy_class, derive_seed(seed, 13),
                                                       cfg.crossfit_k, cfg.propensity, oracle, cfg.tree_depth)
                if train_q is not None:
                    row["plug_in_value"] = plugin_value(policy, *train_q, data.x).value
                if nuis is None and cfg.evaluate_one_step:
                    nuis = cross_fit_nuisances(data, spec, w, cfg.crossfit_k, derive_seed(seed, 13),
                                               cfg.propensity, oracle)
                if nuis is not None:
                    row["one_step_value"] = one_step_value(policy, nuis, data).value
                row["oracle_value"] = oracle.value(policy, eval_x)
                row["agreement_with_oracle"] = policy_agreement(policy, star, eval_x)
            except Exception as exc:
                logger.warning("cell %s/%s n=%d rep=%d failed: %s", spec.kind, method, n, rep, exc)
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            # the shared model fit is charged to the first method
            elapsed = time.perf_counter() - t0 + (fit_time if method == cfg.methods[0] else 0.0)
            timings.append({"estimator": spec.kind, "policy_method": method, "n": n, "repetition": rep,
                            "wall_time": elapsed})
    return rows, timings


def _sort_key(row):
    return (row["estimator"], row["policy_method"], row["n"], row["repetition"])


def run_experiment(cfg):
    """Run every (n, repetition, estimator, method) cell of the grid.

    Returns:
        ExperimentResult with rows sorted by (estimator, method, n, repetition).
    """
    eval_x = eval_covariates(cfg)
    cells = [(i, r) for i in range(len(cfg.n_grid)) for r in range(cfg.repetitions)]
    rows, timings = [], []
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda c: _cell(cfg, c[0], c[1], eval_x), cells))
    else:
        results = [_cell(cfg, i, r, eval_x) for i, r in cells]
    for cell_rows, cell_times in results:
        rows.extend(cell_rows)
        timings.extend(cell_times)
    rows.sort(key=_sort_key)
    timings.sort(key=_sort_key)
    return ExperimentResult(rows, timings, cfg)


def summarize(result, b=None, seed=0):
    """Per (estimator, method, n) means and bootstrap intervals of the oracle value."""
    b = result.config.bootstrap_b if b is None else b
    groups = {}
    for row in result.rows:
        groups.setdefault((row["estimator"], row["policy_method"], row["n"]), []).append(row)
    out = []
    for (est, method, n), rows in sorted(groups.items()):
        ok = [r for r in rows if not r["error"]]
        entry = {"estimator": est, "policy_method": method, "n": n, "cells": len(rows), "errors": len(rows) - len(ok)}
        for col in ("oracle_value", "plug_in_value", "one_step_value", "agreement_with_oracle"):
            vals = np.array([r[col] for r in ok], dtype=float)
            vals = vals[np.isfinite(vals)]
            entry[f"mean_{col}"] = float(vals.mean()) if len(vals) else None
        vals = np.array([r["oracle_value"] for r in ok], dtype=float)
        entry["oracle_value_ci"] = list(bootstrap_ci(vals, b, seed=seed)) if np.isfinite(vals).sum() >= 2 else None
        out.append(entry)
    return out


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if not np.isfinite(v) else repr(float(v))
    return str(v)


def write_rows(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def write_results(result, out_dir):
    """Write ``results.csv``, ``timings.csv`` and ``summary.json`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    write_rows(os.path.join(out_dir, "results.csv"), result.rows, RESULT_COLUMNS)
    write_rows(os.path.join(out_dir, "timings.csv"), result.timings,
               ("estimator", "policy_method", "n", "repetition", "wall_time"))
    summary = {"groups": summarize(result), "total_cells": len(result.rows),
               "error_cells": sum(1 for r in result.rows if r["error"])}
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def coupled_ite_value(policy, data):
    """Value of ``policy`` under the realised potential-outcome coupling (needs hidden outcomes)."""
    a = actions(policy, data.x)
    y1 = data.y1[:, 0] if data.y1.shape[1] == 1 else data.y1
    y0 = data.y0[:, 0] if data.y0.shape[1] == 1 else data.y0
    return float(np.mean(np.where(a == 1, y1 > y0, y0 > y1)))


def evaluation_sweep(cfg, ite_n=200_000):
    """Estimate the value of the oracle-optimal policy with each estimator.

    For every (n, repetition, estimator) the plug-in value of the optimal policy
    is computed on the training covariates, along with a cross-fitted one-step
    value when ``cfg.evaluate_one_step`` is set. Each row also carries the
    oracle value on the held-out covariates and the Monte-Carlo value under the
    DGP's actual potential-outcome coupling.
    """
    eval_x = eval_covariates(cfg)
    w = cfg.preference
    ite_dgp = cfg.dgp_for(ite_n, derive_seed(cfg.eval_seed(), 1))
    ite_data = synthgen.make_dataset(ite_dgp)
    ite_val = coupled_ite_value(OraclePolicy(synthgen.make_oracle(ite_dgp)), ite_data)
    rows = []
    for i, n in enumerate(cfg.n_grid):
        for rep in range(cfg.repetitions):
            seed = cfg.train_seed(i, rep)
            dgp = cfg.dgp_for(n, seed)
            data = synthgen.make_dataset(dgp)
            oracle = synthgen.make_oracle(dgp)
            star = OraclePolicy(oracle)
            for spec in cfg.estimators:
                row = {"estimator": spec.kind, "n": n, "repetition": rep, "plug_in_value": np.nan,
                       "one_step_value": np.nan, "oracle_value": oracle.value(star, eval_x), "ite_value": ite_val,
                       "error": ""}
                try:
                    model = fit_cpte(spec, data, w, seed=derive_seed(seed, 11), oracle=oracle)
                    qw, ql = model.predict(data.x)
                    row["plug_in_value"] = plugin_value(star, qw, ql, data.x).value
                    if cfg.evaluate_one_step:
                        nuis = cross_fit_nuisances(data, spec, w, cfg.crossfit_k, derive_seed(seed, 13),
                                                   cfg.propensity, oracle)
                        row["one_step_value"] = one_step_value(star, nuis, data).value
                except Exception as exc:
                    row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
    rows.sort(key=lambda r: (r["estimator"], r["n"], r["repetition"]))
    return rows
