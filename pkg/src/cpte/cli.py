"""Batch command-line interface.

Exit codes: 0 success, 1 I/O failure, 2 input schema or config, 3 degenerate
data, 4 estimator failure, 5 policy-search failure.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import synthgen
from .config import ConfigError, load_config, write_echo
from .data import Dataset, DegenerateDataError, SchemaError, read_csv, read_points, read_table, write_csv
from .distest.registry import fit_cpte
from .evalharness import run_experiment, write_results
from .policy import (DegenerateScoresError, cross_fit_nuisances, fit_policy_from_scores,
                     one_step_scores, one_step_value, otr_plugin, plugin_value)

logger = logging.getLogger("cpte")

EXIT_OK, EXIT_IO, EXIT_SCHEMA, EXIT_DEGENERATE, EXIT_ESTIMATOR, EXIT_POLICY = 0, 1, 2, 3, 4, 5
MISSING = {"", "na", "nan", "null", "none"}
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _setup_logging():
    level = LOG_LEVELS.get(os.environ.get("CPTE_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logger.setLevel(level)


def _resolved_config(args):
    cfg = load_config(args.config)
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.threads is not None:
        update["threads"] = args.threads
    return cfg.model_copy(update=update) if update else cfg


def _echo_path(out_path):
    return out_path + ".config.yaml"


def _write_fmt(v):
    return repr(float(v))


def cmd_simulate(args):
    cfg = _resolved_config(args)
    dgp = cfg.dgp.build(cfg.seed)
    data = synthgen.make_dataset(dgp)
    write_csv(args.out, data, with_oracle=args.with_oracle)
    write_echo(cfg, _echo_path(args.out))
    logger.info("wrote %d rows to %s", data.n, args.out)
    return EXIT_OK


def _fit(spec, data, w, seed, oracle=None):
    try:
        return fit_cpte(spec, data, w, seed=seed, oracle=oracle)
    except DegenerateDataError:
        raise
    except Exception as exc:
        raise CliError(f"estimator {spec.kind} failed: {exc}", EXIT_ESTIMATOR) from exc


def _oracle_for(cfg):
    return synthgen.make_oracle(cfg.dgp.build(cfg.seed))


def cmd_estimate(args):
    cfg = _resolved_config(args)
    data = read_csv(args.data)
    data.check_arms()
    points = read_points(args.points)
    if points.shape[1] != data.x.shape[1]:
        raise SchemaError(f"query points have {points.shape[1]} covariates, data has {data.x.shape[1]}",
                          column=f"x{min(points.shape[1], data.x.shape[1])}")
    w = cfg.preference.build()
    header = ["estimator"] + [f"x{j}" for j in range(points.shape[1])] + ["q_w", "q_l", "delta"]
    rows = []
    for est in cfg.estimators:
        spec = est.build()
        oracle = _oracle_for(cfg) if spec.kind == "oracle" else None
        model = _fit(spec, data, w, cfg.seed, oracle)
        try:
            qw, ql = model.predict(points)
        except Exception as exc:
            raise CliError(f"estimator {spec.kind} failed to predict: {exc}", EXIT_ESTIMATOR) from exc
        for i in range(len(points)):
            rows.append([spec.kind] + [_write_fmt(v) for v in points[i]]
                        + [_write_fmt(qw[i]), _write_fmt(ql[i]), _write_fmt(qw[i] - ql[i])])
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    write_echo(cfg, _echo_path(args.out))
    return EXIT_OK


def cmd_learn(args):
    cfg = _resolved_config(args)
    data = read_csv(args.data)
    data.check_arms()
    w = cfg.preference.build()
    spec = cfg.estimators[0].build()
    pol_cfg = cfg.policy
    oracle = _oracle_for(cfg) if spec.kind == "oracle" or pol_cfg.propensity == "oracle" else None
    method = pol_cfg.learn_method
    try:
        nuis = cross_fit_nuisances(data, spec, w, pol_cfg.crossfit_k, cfg.seed, pol_cfg.propensity, oracle)
    except DegenerateDataError:
        raise
    except Exception as exc:
        raise CliError(f"estimator {spec.kind} failed: {exc}", EXIT_ESTIMATOR) from exc
    model = _fit(spec, data, w, cfg.seed, oracle)
    qw, ql = model.predict(data.x)
    try:
        if method == "otr_plugin":
            policy = otr_plugin(model)
            if not np.any(qw != ql):
                raise DegenerateScoresError("degenerate scores: q_w equals q_l at every training point")
        elif method == "plugin_optim":
            policy = fit_policy_from_scores(data.x, qw, ql, pol_cfg.policy_class, pol_cfg.tree_depth, cfg.seed)
        else:
            gw, gl = one_step_scores(nuis, data.t)
            policy = fit_policy_from_scores(data.x, gw, gl, pol_cfg.policy_class, pol_cfg.tree_depth, cfg.seed)
    except DegenerateScoresError as exc:
        raise CliError(str(exc), EXIT_POLICY) from exc
    except Exception as exc:
        raise CliError(f"policy search failed: {exc}", EXIT_POLICY) from exc
    report = {
        "policy": policy.to_record(),
        "method": method,
        "estimator": spec.kind,
        "plug_in_value": plugin_value(policy, qw, ql, data.x).value,
        "one_step_value": one_step_value(policy, nuis, data).value,
        "n": data.n,
    }
    report["one_step_value_clipped"] = float(np.clip(report["one_step_value"], 0.0, 1.0))
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_echo(cfg, _echo_path(args.out))
    return EXIT_OK


def cmd_experiment(args):
    cfg = _resolved_config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    write_echo(cfg, os.path.join(args.out_dir, "config.yaml"))
    result = run_experiment(cfg.experiment_config())
    summary = write_results(result, args.out_dir)
    if summary["error_cells"]:
        logger.warning("%d of %d cells failed; see results.csv", summary["error_cells"], summary["total_cells"])
    return EXIT_OK


def _is_missing(value):
    return value.strip().lower() in MISSING


def ingest_table(header, rows, treatment, outcomes, categorical=(), continuous=(), orientation=None):
    """Validate and encode a raw table.

    Returns:
        ``(Dataset, report)`` where the report counts dropped rows and lists encoded columns.
    """
    col = {name: i for i, name in enumerate(header)}
    for name in [treatment, *outcomes, *categorical, *continuous]:
        if name not in col:
            raise SchemaError(f"declared column {name!r} not found", column=name)
    if not outcomes:
        raise SchemaError("no outcome columns declared", column="outcomes")
    if not (categorical or continuous):
        raise SchemaError("no feature columns declared", column="features")
    orientation = list(orientation) if orientation else [1] * len(outcomes)
    if len(orientation) != len(outcomes) or any(s not in (1, -1) for s in orientation):
        raise SchemaError("orientation needs one +1/-1 flag per outcome", column="orientation")
    keep = [r for r in rows if not any(_is_missing(r[col[o]]) for o in outcomes)]
    dropped = len(rows) - len(keep)
    if not keep:
        raise DegenerateDataError(f"all {len(rows)} rows dropped for missing outcomes")
    try:
        t = np.array([float(r[col[treatment]]) for r in keep])
    except ValueError:
        raise SchemaError("treatment column is not numeric", column=treatment) from None
    if not np.isin(t, (0.0, 1.0)).all():
        raise SchemaError("treatment column must be binary (0/1)", column=treatment)
    try:
        y = np.column_stack([[float(r[col[o]]) * s for r in keep] for o, s in zip(outcomes, orientation)])
    except ValueError as exc:
        raise SchemaError(f"outcome column has a non-numeric value: {exc}", column=outcomes[0]) from None
    blocks, names = [], []
    for name in categorical:
        raw = [r[col[name]].strip() for r in keep]
        levels = sorted({v for v in raw if not _is_missing(v)})
        # a missing category encodes as all zeros
        blocks.append(np.array([[1.0 if v == lvl else 0.0 for lvl in levels] for v in raw]).reshape(len(raw), -1))
        names += [f"{name}={lvl}" for lvl in levels]
    for name in continuous:
        raw = [r[col[name]] for r in keep]
        try:
            vals = np.array([np.nan if _is_missing(v) else float(v) for v in raw])
        except ValueError:
            raise SchemaError(f"continuous column {name!r} has a non-numeric value", column=name) from None
        fill = np.nanmedian(vals) if np.isfinite(vals).any() else 0.0
        blocks.append(np.where(np.isnan(vals), fill, vals)[:, None])
        names.append(name)
    x = np.hstack(blocks)
    report = {"rows_in": len(rows), "rows_kept": len(keep), "dropped": dropped, "features": names}
    return Dataset(x, t.astype(int), y), report


def cmd_ingest(args):
    cfg = _resolved_config(args)
    spec = cfg.ingest
    treatment = args.treatment or spec.treatment
    outcomes = args.outcomes.split(",") if args.outcomes else spec.outcomes
    categorical = args.categorical.split(",") if args.categorical else spec.categorical
    continuous = args.continuous.split(",") if args.continuous else spec.continuous
    orientation = [int(s) for s in args.orientation.split(",")] if args.orientation else spec.orientation
    header, rows = read_table(args.data)
    data, report = ingest_table(header, rows, treatment, outcomes, categorical, continuous, orientation)
    write_csv(args.out, data)
    with open(args.out + ".features.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"kept {report['rows_kept']} rows, dropped {report['dropped']} with missing outcomes")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads for experiment grids")
    common.add_argument("--with-oracle", action="store_true", help="simulate: append hidden potential outcomes")

    parser = argparse.ArgumentParser(prog="cpte", description="Preference-based treatment effects and policies")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="CPTE estimates at query points")
    p.add_argument("--data", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("learn", parents=[common], help="learn a policy and report its values")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("experiment", parents=[common], help="run an experiment grid")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("ingest", parents=[common], help="validate and encode an external CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--treatment")
    p.add_argument("--outcomes", help="comma-separated outcome columns, primary first")
    p.add_argument("--orientation", help="comma-separated +1/-1 per outcome")
    p.add_argument("--categorical", help="comma-separated categorical feature columns")
    p.add_argument("--continuous", help="comma-separated continuous feature columns")
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, SchemaError) as exc:
        column = getattr(exc, "column", None)
        suffix = f" (column {column})" if column else ""
        print(f"error: {exc}{suffix}", file=sys.stderr)
        return EXIT_SCHEMA
    except DegenerateDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
