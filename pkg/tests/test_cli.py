import csv
import json
import logging

import numpy as np
import pytest
import yaml

from cpte import cli
from cpte.config import ConfigError, load_config, parse_config
from cpte.data import read_csv


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return str(path)


def read_out(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(*argv):
    return cli.main([str(a) for a in argv])


HET = {"seed": 3, "dgp": {"n": 400, "heterogeneous": True}}


# config ------------------------------------------------------------------------------

def test_unknown_key_names_path():
    with pytest.raises(ConfigError, match=r"estimators\.0\.kk"):
        parse_config({"estimators": [{"kind": "knn", "kk": 3}]})
    with pytest.raises(ConfigError, match=r"dgp\.colour"):
        parse_config({"dgp": {"colour": "red"}})


def test_bad_values_rejected():
    for bad in ({"estimators": [{"kind": "svm"}]}, {"preference": {"kind": "pns_indicator", "orientation": [2]}},
                {"policy": {"tree_depth": 3}}, {"seed": -1}):
        with pytest.raises(ConfigError):
            parse_config(bad)


def test_config_echo_round_trip(tmp_path):
    cfg = parse_config({"seed": 9, "dgp": {"n": 50, "correlation_target": 0.3}, "estimators": [{"kind": "qrf"}]})
    path = tmp_path / "echo.yaml"
    path.write_text(cfg.to_yaml())
    assert load_config(str(path)) == cfg


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.yaml"))
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(str(tmp_path / "list.yaml"))


# simulate ----------------------------------------------------------------------------

def test_simulate_rows_and_determinism(tmp_path):
    conf = write_yaml(tmp_path / "c.yaml", {"seed": 1, "dgp": {"n": 100}})
    assert run("simulate", "--config", conf, "--out", tmp_path / "a.csv") == 0
    assert run("simulate", "--config", conf, "--out", tmp_path / "b.csv") == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    rows = read_out(tmp_path / "a.csv")
    assert len(rows) == 100 and len(rows[0]) >= 12
    assert (tmp_path / "a.csv.config.yaml").exists()


def test_simulate_with_oracle_sutva(tmp_path):
    out = tmp_path / "d.csv"
    assert run("simulate", "--seed", 4, "--with-oracle", "--out", out) == 0
    data = read_csv(str(out))
    assert data.has_oracle
    assert np.array_equal(data.y, np.where(data.t[:, None] == 1, data.y1, data.y0))


def test_seed_flag_overrides_config(tmp_path):
    conf = write_yaml(tmp_path / "c.yaml", {"seed": 1, "dgp": {"n": 30}})
    run("simulate", "--config", conf, "--seed", 2, "--out", tmp_path / "a.csv")
    run("simulate", "--config", conf, "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()
    assert load_config(str(tmp_path / "a.csv.config.yaml")).seed == 2


def test_bad_config_exit_code(tmp_path, capsys):
    conf = write_yaml(tmp_path / "c.yaml", {"estimators": [{"kind": "knn", "kk": 3}]})
    assert run("simulate", "--config", conf, "--out", tmp_path / "a.csv") == 2
    assert "estimators.0.kk" in capsys.readouterr().err


def test_unwritable_output(tmp_path):
    assert run("simulate", "--out", tmp_path / "no" / "such" / "dir.csv") == 1


# estimate ----------------------------------------------------------------------------

def _points(tmp_path, rows, p=1):
    return write_rows(tmp_path / "points.csv", [f"x{j}" for j in range(p)], rows)


def test_estimate_two_rows(tmp_path):
    data = write_rows(tmp_path / "d.csv", ["x0", "t", "y0"], [[0.0, 1, 0.3], [5.0, 0, 0.1]])
    conf = write_yaml(tmp_path / "c.yaml", {"estimators": [{"kind": "knn", "k": 1}]})
    pts = _points(tmp_path, [[-2.0], [1.0], [9.0]])
    assert run("estimate", "--config", conf, "--data", data, "--points", pts, "--out", tmp_path / "q.csv") == 0
    out = read_out(tmp_path / "q.csv")
    assert [float(r["q_w"]) for r in out] == [1.0, 1.0, 1.0]


def test_estimate_example_two(tmp_path):
    treated = [[0.0, 1, v] for v in (0.0, 0.1, 1.1) * 2]
    control = [[0.0, 0, v] for v in (-0.1, 1.0) * 3]
    data = write_rows(tmp_path / "d.csv", ["x0", "t", "y0"], treated + control)
    conf = write_yaml(tmp_path / "c.yaml", {"estimators": [{"kind": "knn", "k": 6}]})
    assert run("estimate", "--config", conf, "--data", data, "--points", _points(tmp_path, [[0.0]]),
               "--out", tmp_path / "q.csv") == 0
    assert float(read_out(tmp_path / "q.csv")[0]["delta"]) == pytest.approx(1 / 3, abs=1e-12)


def test_estimate_tie_aware_complement(tmp_path):
    sim = write_yaml(tmp_path / "s.yaml", {"seed": 2, "dgp": {"kind": "hierarchical", "n": 300}})
    assert run("simulate", "--config", sim, "--out", tmp_path / "h.csv") == 0
    conf = write_yaml(tmp_path / "c.yaml", {"preference": {"kind": "lexicographic_win", "orientation": [1, 1]},
                                            "estimators": [{"kind": "knn"}, {"kind": "linear_quantile", "samples": 200}]})
    pts = write_rows(tmp_path / "p.csv", [f"x{j}" for j in range(10)],
                     np.random.default_rng(0).normal(size=(8, 10)).round(3).tolist())
    assert run("estimate", "--config", conf, "--data", tmp_path / "h.csv", "--points", pts,
               "--out", tmp_path / "q.csv") == 0
    out = read_out(tmp_path / "q.csv")
    assert len(out) == 16
    assert all(float(r["q_w"]) + float(r["q_l"]) == 1.0 for r in out)


def test_estimate_schema_error_names_column(tmp_path, capsys):
    data = write_rows(tmp_path / "d.csv", ["x0", "treat", "y0"], [[0.0, 1, 0.3], [1.0, 0, 0.2]])
    assert run("estimate", "--data", data, "--points", _points(tmp_path, [[0.0]]), "--out", tmp_path / "q.csv") == 2
    assert "treat" in capsys.readouterr().err


def test_estimate_empty_arm(tmp_path):
    data = write_rows(tmp_path / "d.csv", ["x0", "t", "y0"], [[0.0, 1, 0.3], [1.0, 1, 0.2]])
    assert run("estimate", "--data", data, "--points", _points(tmp_path, [[0.0]]), "--out", tmp_path / "q.csv") == 3


def test_estimate_estimator_failure(tmp_path):
    data = write_rows(tmp_path / "d.csv", ["x0", "t", "y0"], [[0.0, 1, 0.3], [1.0, 0, 0.2]])
    conf = write_yaml(tmp_path / "c.yaml", {"estimators": [{"kind": "knn", "k": 5}]})
    assert run("estimate", "--config", conf, "--data", data, "--points", _points(tmp_path, [[0.0]]),
               "--out", tmp_path / "q.csv") == 4


def test_missing_input_file(tmp_path):
    assert run("estimate", "--data", tmp_path / "none.csv", "--points", tmp_path / "none.csv",
               "--out", tmp_path / "q.csv") == 1


# learn -------------------------------------------------------------------------------

def test_learn_oracle_tree_on_modifier(tmp_path):
    conf = dict(HET, estimators=[{"kind": "oracle"}],
                policy={"learn_method": "one_step_optim", "policy_class": "tree", "tree_depth": 1,
                        "propensity": "oracle"})
    path = write_yaml(tmp_path / "c.yaml", conf)
    assert run("simulate", "--config", path, "--out", tmp_path / "d.csv") == 0
    assert run("learn", "--config", path, "--data", tmp_path / "d.csv", "--out", tmp_path / "p1.json") == 0
    assert run("learn", "--config", path, "--data", tmp_path / "d.csv", "--out", tmp_path / "p2.json") == 0
    report = json.loads((tmp_path / "p1.json").read_text())
    root = report["policy"]["root"]
    assert root["feature"] == 8 and 0 < root["threshold"] < 1
    assert root["left"] == {"action": 0} and root["right"] == {"action": 1}
    assert (tmp_path / "p1.json").read_bytes() == (tmp_path / "p2.json").read_bytes()


@pytest.mark.parametrize("method", ["otr_plugin", "plugin_optim", "one_step_optim"])
def test_learn_degenerate_scores(tmp_path, capsys, method):
    rows = [[float(i), i % 2, 1.0] for i in range(40)]
    data = write_rows(tmp_path / "d.csv", ["x0", "t", "y0"], rows)
    conf = write_yaml(tmp_path / "c.yaml", {"policy": {"learn_method": method, "propensity": "fixed"}})
    assert run("learn", "--config", conf, "--data", data, "--out", tmp_path / "p.json") == 5
    assert "degenerate scores" in capsys.readouterr().err


@pytest.mark.parametrize("policy_class", ["tree", "linear"])
def test_learn_knn_report(tmp_path, policy_class):
    conf = dict(HET, policy={"learn_method": "one_step_optim", "policy_class": policy_class})
    path = write_yaml(tmp_path / "c.yaml", conf)
    run("simulate", "--config", path, "--out", tmp_path / "d.csv")
    assert run("learn", "--config", path, "--data", tmp_path / "d.csv", "--out", tmp_path / "p.json") == 0
    report = json.loads((tmp_path / "p.json").read_text())
    assert report["policy"]["variant"] == policy_class
    assert 0 <= report["plug_in_value"] <= 1
    assert 0 <= report["one_step_value_clipped"] <= 1


# experiment --------------------------------------------------------------------------

def _experiment_conf(tmp_path):
    return write_yaml(tmp_path / "c.yaml", {
        "seed": 11, "dgp": {"heterogeneous": True}, "estimators": [{"kind": "knn"}],
        "policy": {"methods": ["otr_plugin", "one_step_optim"], "propensity": "fixed"},
        "experiment": {"n_grid": [30, 100], "repetitions": 2, "eval_n": 2000, "bootstrap_b": 200}})


def test_experiment_smoke_and_echo_round_trip(tmp_path):
    conf = _experiment_conf(tmp_path)
    assert run("experiment", "--config", conf, "--out-dir", tmp_path / "a") == 0
    rows = read_out(tmp_path / "a" / "results.csv")
    assert len(rows) == 2 * 2 * 1 * 2
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    for g in summary["groups"]:
        vals = [float(r["oracle_value"]) for r in rows
                if r["policy_method"] == g["policy_method"] and int(r["n"]) == g["n"]]
        assert g["mean_oracle_value"] == pytest.approx(np.mean(vals), abs=1e-12)
    echo = tmp_path / "a" / "config.yaml"
    assert run("experiment", "--config", echo, "--out-dir", tmp_path / "b") == 0
    for f in ("results.csv", "summary.json", "config.yaml"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


# ingest ------------------------------------------------------------------------------

def _ingest(tmp_path, header, rows, *extra):
    data = write_rows(tmp_path / "raw.csv", header, rows)
    return run("ingest", "--data", data, "--out", tmp_path / "clean.csv", *extra)


def test_ingest_encodes_and_reports(tmp_path, capsys):
    header = ["arm", "site", "age", "score", "lost"]
    rows = [[1, "a", 10, 5.0, 0], [0, "b", "", 4.0, 1], [1, "", 30, 3.0, 0], [0, "a", 40, "", 0],
            [1, "b", 50, 2.0, 1], [0, "a", 20, 1.0, 0], [1, "b", "NA", 6.0, 0], [0, "a", 60, "", 1],
            [1, "a", 70, 7.0, 0], [0, "b", 80, 8.0, 1]]
    code = _ingest(tmp_path, header, rows, "--treatment", "arm", "--outcomes", "lost,score",
                   "--orientation=-1,1", "--categorical", "site", "--continuous", "age")
    assert code == 0
    assert "kept 8 rows, dropped 2" in capsys.readouterr().out
    data = read_csv(str(tmp_path / "clean.csv"))
    assert data.n == 8
    # columns: site=a, site=b, age
    assert data.x[2, :2].tolist() == [0.0, 0.0]
    kept_ages = [10, None, 30, 50, 20, None, 70, 80]
    median = float(np.median([a for a in kept_ages if a is not None]))
    assert data.x[1, 2] == median and data.x[5, 2] == median
    assert data.y[:, 0].tolist() == [0, -1, 0, -1, 0, 0, 0, -1]
    report = json.loads((tmp_path / "clean.csv.features.json").read_text())
    assert report["dropped"] == 2 and report["features"] == ["site=a", "site=b", "age"]


def test_ingest_median_five_rows(tmp_path):
    rows = [[1, 1.0, 0.5], [0, "", 0.1], [1, 4.0, 0.3], [0, 10.0, 0.2], [1, "", 0.9]]
    assert _ingest(tmp_path, ["t", "dose", "y"], rows, "--treatment", "t", "--outcomes", "y",
                   "--continuous", "dose") == 0
    data = read_csv(str(tmp_path / "clean.csv"))
    assert data.x[:, 0].tolist() == [1.0, 4.0, 4.0, 10.0, 4.0]


def test_ingest_non_binary_treatment(tmp_path):
    rows = [[2, 1.0, 0.5], [0, 2.0, 0.1]]
    assert _ingest(tmp_path, ["t", "dose", "y"], rows, "--treatment", "t", "--outcomes", "y",
                   "--continuous", "dose") == 2


def test_ingest_all_rows_dropped(tmp_path):
    rows = [[1, 1.0, ""], [0, 2.0, "na"]]
    assert _ingest(tmp_path, ["t", "dose", "y"], rows, "--treatment", "t", "--outcomes", "y",
                   "--continuous", "dose") == 3


def test_ingest_undeclared_column(tmp_path, capsys):
    rows = [[1, 1.0, 0.5]]
    assert _ingest(tmp_path, ["t", "dose", "y"], rows, "--treatment", "t", "--outcomes", "y",
                   "--continuous", "weight") == 2
    assert "weight" in capsys.readouterr().err


def test_ingest_rerun_byte_identical(tmp_path):
    rows = [[1, "a", 1.0, 0.5], [0, "b", "", 0.1], [1, "a", 3.0, 0.2]]
    args = ("--treatment", "t", "--outcomes", "y", "--categorical", "g", "--continuous", "z")
    _ingest(tmp_path, ["t", "g", "z", "y"], rows, *args)
    first = (tmp_path / "clean.csv").read_bytes()
    _ingest(tmp_path, ["t", "g", "z", "y"], rows, *args)
    assert (tmp_path / "clean.csv").read_bytes() == first


# logging -----------------------------------------------------------------------------

def test_log_level_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CPTE_LOG", "debug")
    run("simulate", "--out", tmp_path / "a.csv")
    assert logging.getLogger("cpte").level == logging.DEBUG
    monkeypatch.setenv("CPTE_LOG", "error")
    run("simulate", "--out", tmp_path / "a.csv")
    assert logging.getLogger("cpte").level == logging.ERROR
