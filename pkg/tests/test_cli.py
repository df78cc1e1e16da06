import csv
import json

import pytest

from fate.cli import main
from fate.harness import (COMPARISON_COLUMNS, STATS_COLUMNS, SWEEP_COLUMNS, CsvTable,
                          ExperimentConfig, comparison_stats, read_table, replay_row,
                          report_metrics, row_metrics)
from fate.errors import ConfigError, CsvSchemaMismatch

SMALL_CATALOG = ["StandardScale", "ResampleOver", "IPWeight"]


def write_config(tmp_path, **over):
    cfg = {
        "dataset": {"name": "syn", "synthetic": {"n": 200, "label_bias": 0.3, "seed": 3}},
        "models": [{"family": "lr", "hyperparams": {"epochs": 60}}],
        "ga": {"generations": 3, "population": 4, "l_max": 2, "catalog": SMALL_CATALOG},
        "seed": 5,
        "repetitions": 2,
        "sweep": {"population": [3], "generations": [2], "crossover_rate": [0.25],
                  "mutation_rate": [0.25]},
    }
    cfg.update(over)
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(cfg))
    return p


def test_optimize_artifacts_and_determinism(tmp_path):
    cfg = write_config(tmp_path, ga={"G": 10, "N": 5, "l_max": 2, "catalog": SMALL_CATALOG})
    assert main(["optimize", "--config", str(cfg), "--seed", "42", "--out", str(tmp_path / "a")]) == 0
    assert main(["optimize", "--config", str(cfg), "--seed", "42", "--out", str(tmp_path / "b")]) == 0
    for name in ("best_pipeline.json", "report.json", "run.log", "history.csv"):
        assert (tmp_path / "a" / name).exists()
    assert (tmp_path / "a" / "best_pipeline.json").read_bytes() == \
        (tmp_path / "b" / "best_pipeline.json").read_bytes()
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert len(report["history"]) == 10
    assert report["seed"] == 42
    assert report["best_report"]["fitness"] is not None
    assert "best" in (tmp_path / "a" / "run.log").read_text()


def test_optimize_jobs_invariant(tmp_path):
    cfg = write_config(tmp_path)
    main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "j1")])
    main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "j2"), "--jobs", "2"])
    assert (tmp_path / "j1" / "report.json").read_bytes() == \
        (tmp_path / "j2" / "report.json").read_bytes()


def test_optimize_fs_mode_flag(tmp_path):
    cfg = write_config(tmp_path)
    main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "lit"), "--fs-mode", "literal"])
    rep = json.loads((tmp_path / "lit" / "report.json").read_text())
    assert rep["best_report"]["fs_mode"] == "literal"


def test_missing_dataset_exits_2_without_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path, dataset={"path": "nope.csv", "schema": "german_credit"})
    out = tmp_path / "out"
    assert main(["optimize", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_invalid_config_exits_2(tmp_path):
    assert main(["optimize", "--config", str(tmp_path / "missing.json")]) == 2
    bad = write_config(tmp_path, ga={"generations": 0})
    assert main(["optimize", "--config", str(bad)]) == 2
    bad = write_config(tmp_path, repetitions=0)
    assert main(["sweep", "--config", str(bad)]) == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["optimize", "--config", str(tmp_path / "broken.json")]) == 2


def test_runtime_error_exits_1(tmp_path):
    cfg = write_config(tmp_path, ga={"generations": 2, "population": 2, "l_max": 1,
                                     "catalog": [{"kind": "Match",
                                                  "params": {"max_distance": 1e-12}}]})
    assert main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_sweep_rows(tmp_path):
    cfg = write_config(tmp_path, repetitions=1,
                       sweep={"population": [25, 50], "generations": [25, 50],
                              "crossover_rate": [0.25], "mutation_rate": [0.25]})
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_table(out / "results.csv")
    fate_rows = [r for r in rows if r["row_type"] == "fate"]
    assert len(fate_rows) == 4
    assert {(r["population"], r["generations"]) for r in fate_rows} == \
        {("25", "25"), ("25", "50"), ("50", "25"), ("50", "50")}
    assert sum(r["row_type"] == "no_prep" for r in rows) == 1
    singles = [r for r in rows if r["row_type"] == "single_practice"]
    assert len(singles) == len(SMALL_CATALOG)
    for r in rows:
        assert r["seed"] == "5" and r["config_hash"] and r["schema_version"]
    with open(out / "results.csv") as fh:
        assert next(csv.reader(fh)) == list(SWEEP_COLUMNS)


def test_sweep_no_prep_per_model_and_rep(tmp_path):
    cfg = write_config(tmp_path, models=["lr", {"family": "svc", "hyperparams": {"epochs": 30}}])
    out = tmp_path / "s"
    main(["sweep", "--config", str(cfg), "--out", str(out)])
    rows = read_table(out / "results.csv")
    keys = {(r["model"], r["repetition"]) for r in rows if r["row_type"] == "no_prep"}
    assert keys == {(m, rep) for m in ("LogisticRegression", "LinearSVC") for rep in ("0", "1")}


def test_sweep_empty_grid_exits_2(tmp_path):
    cfg = write_config(tmp_path, sweep={"population": []})
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2


def test_sweep_failed_cells_recorded(tmp_path):
    cfg = write_config(tmp_path, ga={"generations": 2, "population": 2, "l_max": 1,
                                     "catalog": [{"kind": "Match",
                                                  "params": {"max_distance": 1e-12}},
                                                 "StandardScale"]},
                       sweep={"population": [2], "generations": [1], "crossover_rate": [0.0],
                              "mutation_rate": [0.0]})
    out = tmp_path / "s"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_table(out / "results.csv")
    assert any("DegenerateGroupError" in r["error"] for r in rows)
    assert any(r["row_type"] == "no_prep" and not r["error"] for r in rows)


@pytest.fixture(scope="module")
def compare_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cmp")
    cfg = write_config(tmp, repetitions=10)
    out = tmp / "out"
    assert main(["compare", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


def test_compare_counts_and_schemas(compare_run):
    cfg, out = compare_run
    records = read_table(out / "comparison.csv")
    stats = read_table(out / "stats.csv")
    assert len(records) == 40
    assert len(stats) == 9
    assert {r["hypothesis"] for r in stats} == {f"H{i}{c}" for i in "123" for c in "abc"}
    with open(out / "comparison.csv") as fh:
        assert next(csv.reader(fh)) == list(COMPARISON_COLUMNS)
    with open(out / "stats.csv") as fh:
        assert next(csv.reader(fh)) == list(STATS_COLUMNS)
    assert len(json.loads((out / "comparison.json").read_text())) == 40
    sj = json.loads((out / "stats.json").read_text())
    assert sj["n_hypotheses"] == 9 and len(sj["rows"]) == 9
    for r in records:
        assert not r["error"]
        assert float(r["execution_time_seconds"]) > 0


def test_compare_shared_folds_per_cell(compare_run):
    cfg, out = compare_run
    records = read_table(out / "comparison.csv")
    for rep in range(10):
        seeds = {r["seed"] for r in records if r["repetition"] == str(rep)}
        assert seeds == {str(5 + rep)}


def test_compare_rows_replay(compare_run):
    cfg, out = compare_run
    conf = ExperimentConfig.load(cfg)
    records = read_table(out / "comparison.csv")
    for row in records[:8]:
        assert report_metrics(replay_row(conf, row)) == row_metrics(row)
    assert main(["replay", "--config", str(cfg), "--table", str(out / "comparison.csv"),
                 "--row", "3"]) == 0


def test_replay_rejects_other_config(compare_run, tmp_path):
    cfg, out = compare_run
    other = write_config(tmp_path, seed=99)
    row = read_table(out / "comparison.csv")[0]
    with pytest.raises(ConfigError):
        replay_row(ExperimentConfig.load(other), row)


def test_stats_identical_samples():
    recs = [{"arm": arm, "fs": 0.3 + 0.01 * i, "ps": 0.7, "execution_time_seconds": 0.1}
            for i in range(5) for arm in ("fate", "dir")]
    rows = comparison_stats(recs, ["dir"])
    assert len(rows) == 3
    for r in rows:
        assert r["a12"] == 0.5 and r["reject_at_0.05"] is False


def test_csv_header_mismatch_on_append(tmp_path):
    p = tmp_path / "t.csv"
    with CsvTable(p, ["a", "b"]) as t:
        t.write({"a": 1, "b": 2})
    with CsvTable(p, ["a", "b"], append=True) as t:
        t.write({"a": 3, "b": 4})
    assert len(read_table(p)) == 2
    with pytest.raises(CsvSchemaMismatch):
        CsvTable(p, ["a", "c"], append=True)


def test_compare_append_mismatch_exit_code(tmp_path):
    cfg = write_config(tmp_path, repetitions=1)
    out = tmp_path / "o"
    out.mkdir()
    (out / "comparison.csv").write_text("x,y\n1,2\n")
    assert main(["compare", "--config", str(cfg), "--out", str(out), "--append"]) == 1
    assert (out / "comparison.csv").read_text() == "x,y\n1,2\n"


def test_baseline_command(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "b"
    assert main(["baseline", "--config", str(cfg), "--baseline", "dir", "--out", str(out)]) == 0
    rows = json.loads((out / "baseline_dir.json").read_text())
    assert rows[0]["report"]["error"] is None and rows[0]["execution_time_seconds"] > 0
    assert main(["baseline", "--config", str(cfg), "--baseline", "lfr"]) == 2
    assert main(["baseline", "--config", str(cfg)]) == 2


def test_metrics_command(tmp_path, capsys):
    p = tmp_path / "preds.csv"
    p.write_text("score,label,protected\n0.9,1,0\n0.8,1,1\n0.7,0,1\n0.6,1,1\n0.2,0,0\n0.1,1,0\n")
    assert main(["metrics", "--predictions", str(p), "--out", str(tmp_path / "m")]) == 0
    got = json.loads((tmp_path / "m" / "metrics.json").read_text())
    assert got["n"] == 6
    assert got["spd"] == pytest.approx(1 / 3 - 1.0)
    assert got["fitness"] == pytest.approx(0.5 * got["ps"] - 0.5 * got["fs"])
    assert main(["metrics", "--predictions", str(tmp_path / "none.csv")]) == 2
    capsys.readouterr()


def test_config_paths_relative_to_file(tmp_path):
    sub = tmp_path / "conf"
    sub.mkdir()
    data = sub / "data.csv"
    data.write_text("x,sex,label\n" + "".join(
        f"{i},{'m' if i % 2 else 'f'},{'y' if i % 3 else 'n'}\n" for i in range(60)))
    schema = {"target_column": "label", "favorable_label": "y", "protected_column": "sex",
              "privileged_value": "m", "feature_columns": [["x", "numeric"]]}
    cfg = write_config(sub, dataset={"path": "data.csv", "schema": schema})
    conf = ExperimentConfig.load(cfg)
    (name, ds), = conf.load_datasets()
    assert name == "data" and ds.n == 60
