"""Experiment harness: configuration, parameter sweeps, FATE-vs-baseline
comparisons, result tables and per-row replay."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Optional

from ._seeding import derive_seed
from .baselines import NAMES as BASELINE_NAMES, apply_baseline
from .data import Dataset, load_source, stratified_kfold
from .errors import ConfigError, CsvSchemaMismatch, FateError
from .evaluation import cross_validate, pipeline_preparer
from .ga import GAConfig, run
from .metrics import METRIC_FIELDS, EvalReport
from .models import ClassifierSpec
from .stats import wilcoxon_rank_sum
from .transforms import Pipeline

log = logging.getLogger(__name__)

SWEEP_SCHEMA = "fate.sweep/1"
COMPARISON_SCHEMA = "fate.comparison/1"
STATS_SCHEMA = "fate.stats/1"

DEFAULT_GRID = {
    "population": [25, 50],
    "generations": [25, 50],
    "crossover_rate": [0.25, 0.75],
    "mutation_rate": [0.25, 0.75],
}
ARMS = ("fate",) + BASELINE_NAMES + ("no_prep",)
# hypothesis letter per comparison arm; H1 = fairness, H2 = performance, H3 = time
HYPOTHESIS_LETTER = {"fairsmote": "a", "reweighing": "b", "dir": "c", "no_prep": "d"}
STAT_METRICS = (("fs", 1), ("ps", 2), ("execution_time_seconds", 3))

_REPORT_COLUMNS = ("fitness", "ps", "fs") + METRIC_FIELDS
SWEEP_COLUMNS = (
    "schema_version", "row_type", "dataset", "model", "repetition", "seed", "config_hash",
    "population", "generations", "crossover_rate", "mutation_rate", "pipeline",
) + _REPORT_COLUMNS + ("evaluations", "wall_time_seconds", "error")
COMPARISON_COLUMNS = (
    "schema_version", "arm", "dataset", "model", "repetition", "seed", "config_hash",
    "execution_time_seconds", "search_time_seconds", "pipeline",
) + _REPORT_COLUMNS + ("error",)
STATS_COLUMNS = (
    "schema_version", "hypothesis", "metric", "arm_x", "arm_y", "n_x", "n_y", "u_statistic",
    "p_value", "a12", "magnitude", "method", "direction", "reject_at_0.05", "n_hypotheses",
    "config_hash", "error",
)


@dataclass
class ExperimentConfig:
    datasets: list  # raw dataset entries
    models: list  # ClassifierSpec
    ga: GAConfig
    seed: int = 0
    repetitions: int = 10
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    baselines: list = field(default_factory=lambda: list(BASELINE_NAMES))
    baseline_params: dict = field(default_factory=dict)
    out: str = "results"
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir=Path(".")) -> "ExperimentConfig":
        try:
            datasets = d.get("datasets") or ([d["dataset"]] if "dataset" in d else [])
            if not datasets:
                raise ConfigError("config needs 'dataset' or 'datasets'")
            models = d.get("models") or ([d["model"]] if "model" in d else ["LogisticRegression"])
            models = [ClassifierSpec.from_dict(m) for m in models]
            ga = GAConfig.from_dict(d.get("ga", {}))
            grid = {**DEFAULT_GRID, **d.get("sweep", {})}
            for key in DEFAULT_GRID:
                if not isinstance(grid[key], list) or not grid[key]:
                    raise ConfigError(f"sweep grid {key!r} must be a non-empty list")
            unknown = set(grid) - set(DEFAULT_GRID)
            if unknown:
                raise ConfigError(f"unknown sweep keys {sorted(unknown)}")
            baselines = d.get("baselines", list(BASELINE_NAMES))
            for b in baselines:
                if b not in BASELINE_NAMES + ("no_prep",):
                    raise ConfigError(f"unknown baseline {b!r}")
            reps = int(d.get("repetitions", 10))
            if reps < 1:
                raise ConfigError("repetitions must be >= 1")
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(datasets=list(datasets), models=models, ga=ga, seed=int(d.get("seed", 0)),
                   repetitions=reps, grid=grid, baselines=list(baselines),
                   baseline_params=dict(d.get("baseline_params", {})),
                   out=d.get("out", "results"), base_dir=Path(base_dir), raw=dict(d))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d, path.parent)

    @property
    def config_hash(self) -> str:
        body = {k: v for k, v in self.raw.items() if k != "out"}
        canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def load_datasets(self) -> list:
        """``[(name, Dataset)]``; raises ConfigError when a source is unusable."""
        out = []
        for entry in self.datasets:
            try:
                out.append(load_source(entry, self.base_dir))
            except (OSError, FateError) as exc:
                raise ConfigError(f"dataset {entry!r}: {exc}") from None
        return out

    def rep_seed(self, rep: int) -> int:
        return self.seed + rep


# -- CSV tables -------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


class CsvTable:
    """Writes rows under a fixed header; appending to a file with a different
    header raises instead of mixing schemas."""

    def __init__(self, path, columns, append=False):
        self.path = Path(path)
        self.columns = list(columns)
        exists = self.path.exists() and self.path.stat().st_size > 0
        if append and exists:
            with open(self.path, newline="", encoding="utf-8") as fh:
                header = next(csv.reader(fh), [])
            if header != self.columns:
                raise CsvSchemaMismatch(f"{self.path}: header does not match {self.columns[0]} schema")
            self._fh = open(self.path, "a", newline="", encoding="utf-8")
            self._w = csv.DictWriter(self._fh, self.columns)
        else:
            self._fh = open(self.path, "w", newline="", encoding="utf-8")
            self._w = csv.DictWriter(self._fh, self.columns)
            self._w.writeheader()

    def write(self, row: dict):
        self._w.writerow({c: _fmt(row.get(c)) for c in self.columns})
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_table(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _report_fields(rep: EvalReport) -> dict:
    return {k: getattr(rep, k) for k in _REPORT_COLUMNS}


# -- arms ---------------------------------------------------------------------------

def baseline_preparer(name: str, params: dict, seed: int):
    if name == "no_prep":
        return None

    def prepare(tr, te, fold):
        return apply_baseline(name, tr, te, params, derive_seed(seed, name, fold))

    return prepare


def run_fate_arm(ga: GAConfig, ds: Dataset, spec: ClassifierSpec, seed: int, folds=None,
                 jobs: int = 1) -> dict:
    """GA search, then a timed re-application of the winning pipeline."""
    cfg = replace(ga, seed=seed)
    folds = folds or stratified_kfold(ds, cfg.k_folds, seed)
    result = run(cfg, ds, spec, folds, jobs=jobs)
    rep, seconds = cross_validate(pipeline_preparer(result.best.pipeline, seed), ds, spec,
                                  folds, cfg.fitness_weights)
    return {"report": rep, "execution_time_seconds": seconds,
            "search_time_seconds": result.wall_time, "pipeline": result.best.pipeline,
            "result": result}


def run_baseline_arm(name: str, params: dict, ds, spec, seed, k_folds, fw, folds=None) -> dict:
    folds = folds or stratified_kfold(ds, k_folds, seed)
    rep, seconds = cross_validate(baseline_preparer(name, params, seed), ds, spec, folds, fw)
    return {"report": rep, "execution_time_seconds": seconds}


# -- sweep ----------------------------------------------------------------------------

def grid_points(grid: dict) -> list:
    keys = ("population", "generations", "crossover_rate", "mutation_rate")
    return [dict(zip(keys, vals)) for vals in product(*(grid[k] for k in keys))]


def run_sweep(cfg: ExperimentConfig, out_dir, jobs: int = 1, append=False) -> Path:
    datasets = cfg.load_datasets()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "results.csv"
    points = grid_points(cfg.grid)
    common = {"schema_version": SWEEP_SCHEMA, "config_hash": cfg.config_hash}
    with CsvTable(path, SWEEP_COLUMNS, append) as table:
        for (dname, ds), spec, rep in product(datasets, cfg.models, range(cfg.repetitions)):
            seed = cfg.rep_seed(rep)
            cell = {**common, "dataset": dname, "model": spec.family, "repetition": rep,
                    "seed": seed}
            folds = stratified_kfold(ds, cfg.ga.k_folds, seed)
            for pt in points:
                ga = replace(cfg.ga, **pt)
                row = {**cell, "row_type": "fate", **pt}
                try:
                    arm = run_fate_arm(ga, ds, spec, seed, folds, jobs)
                    res = arm["result"]
                    row.update(_report_fields(res.best.report), pipeline=res.best.pipeline.key(),
                               evaluations=res.evaluations, wall_time_seconds=res.wall_time)
                except (FateError, ValueError) as exc:
                    row["error"] = f"{type(exc).__name__}: {exc}"
                table.write(row)
                log.info("sweep %s/%s rep %d %s -> %s", dname, spec.short_name, rep, pt,
                         row.get("fitness", row.get("error")))
            singles = [None] + [Pipeline([p]) for p in cfg.ga.catalog]
            for pl in singles:
                row = {**cell, "row_type": "no_prep" if pl is None else "single_practice",
                       "pipeline": "" if pl is None else pl.key()}
                rep_, secs = cross_validate(pipeline_preparer(pl, seed), ds, spec, folds,
                                            cfg.ga.fitness_weights)
                row.update(_report_fields(rep_), wall_time_seconds=secs, error=rep_.error)
                table.write(row)
    return path


# -- comparison ----------------------------------------------------------------------------

def run_compare(cfg: ExperimentConfig, out_dir, jobs: int = 1, append=False) -> tuple:
    if not cfg.baselines:
        raise ConfigError("compare needs at least one baseline")
    datasets = cfg.load_datasets()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fw = cfg.ga.fitness_weights
    records = []
    common = {"schema_version": COMPARISON_SCHEMA, "config_hash": cfg.config_hash}
    comp_path = out_dir / "comparison.csv"
    with CsvTable(comp_path, COMPARISON_COLUMNS, append) as table:
        for (dname, ds), spec, rep in product(datasets, cfg.models, range(cfg.repetitions)):
            seed = cfg.rep_seed(rep)
            folds = stratified_kfold(ds, cfg.ga.k_folds, seed)  # shared by all arms
            for arm in ("fate",) + tuple(cfg.baselines):
                row = {**common, "arm": arm, "dataset": dname, "model": spec.family,
                       "repetition": rep, "seed": seed}
                try:
                    if arm == "fate":
                        res = run_fate_arm(cfg.ga, ds, spec, seed, folds, jobs)
                        row["pipeline"] = res["pipeline"].key()
                        row["search_time_seconds"] = res["search_time_seconds"]
                    else:
                        res = run_baseline_arm(arm, cfg.baseline_params.get(arm, {}), ds, spec,
                                               seed, cfg.ga.k_folds, fw, folds)
                    row.update(_report_fields(res["report"]), error=res["report"].error,
                               execution_time_seconds=res["execution_time_seconds"])
                except (FateError, ValueError) as exc:
                    row["error"] = f"{type(exc).__name__}: {exc}"
                table.write(row)
                records.append(row)
                log.info("compare %s/%s rep %d %s: fs=%s ps=%s", dname, spec.short_name, rep,
                         arm, row.get("fs"), row.get("ps"))
    with open(out_dir / "comparison.json", "w", encoding="utf-8") as fh:
        json.dump([{k: _jsonable(r.get(k)) for k in COMPARISON_COLUMNS} for r in records], fh,
                  indent=2)
    stats_rows = comparison_stats(records, cfg.baselines, cfg.config_hash)
    with CsvTable(out_dir / "stats.csv", STATS_COLUMNS, append) as table:
        for r in stats_rows:
            table.write(r)
    with open(out_dir / "stats.json", "w", encoding="utf-8") as fh:
        json.dump({"n_hypotheses": len(stats_rows), "alpha": 0.05,
                   "multiple_comparison_correction": None,
                   "sample_unit": "one observation per (dataset, model, repetition)",
                   "rows": [{k: _jsonable(r.get(k)) for k in STATS_COLUMNS} for r in stats_rows]},
                  fh, indent=2)
    return records, stats_rows


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _completed(records, arm):
    return [r for r in records if r["arm"] == arm and not r.get("error")]


def comparison_stats(records, baselines, config_hash="") -> list:
    """One rank-sum + A12 row per (FATE vs baseline) x (fs, ps, time)."""
    fate = _completed(records, "fate")
    n_hyp = len(baselines) * len(STAT_METRICS)
    rows = []
    for metric, fam in STAT_METRICS:
        for b in baselines:
            other = _completed(records, b)
            row = {"schema_version": STATS_SCHEMA,
                   "hypothesis": f"H{fam}{HYPOTHESIS_LETTER.get(b, '?')}",
                   "metric": metric, "arm_x": "fate", "arm_y": b,
                   "n_hypotheses": n_hyp, "config_hash": config_hash}
            try:
                res = wilcoxon_rank_sum([float(r[metric]) for r in fate],
                                        [float(r[metric]) for r in other])
                row.update(res.to_dict())
                row["reject_at_0.05"] = row.pop("reject")
            except FateError as exc:
                row["error"] = str(exc)
            rows.append(row)
    return rows


# -- replay ---------------------------------------------------------------------------------

def _pick_dataset(cfg: ExperimentConfig, name: str) -> Dataset:
    for dname, ds in cfg.load_datasets():
        if dname == name:
            return ds
    raise ConfigError(f"dataset {name!r} not in config")


def _pick_model(cfg: ExperimentConfig, family: str) -> ClassifierSpec:
    for spec in cfg.models:
        if spec.family == family:
            return spec
    raise ConfigError(f"model {family!r} not in config")


def replay_row(cfg: ExperimentConfig, row: dict) -> EvalReport:
    """Recompute one sweep or comparison row from its embedded seed."""
    if row.get("config_hash") and row["config_hash"] != cfg.config_hash:
        raise ConfigError("row was produced by a different configuration")
    ds = _pick_dataset(cfg, row["dataset"])
    spec = _pick_model(cfg, row["model"])
    seed = int(row["seed"])
    folds = stratified_kfold(ds, cfg.ga.k_folds, seed)
    fw = cfg.ga.fitness_weights
    kind = row.get("arm") or row.get("row_type")
    if kind == "fate":
        ga = cfg.ga
        if row.get("population"):
            ga = replace(ga, population=int(row["population"]),
                         generations=int(row["generations"]),
                         crossover_rate=float(row["crossover_rate"]),
                         mutation_rate=float(row["mutation_rate"]))
        return run_fate_arm(ga, ds, spec, seed, folds)["report"]
    if kind in ("single_practice", "no_prep") and "row_type" in row:
        pl = Pipeline.from_json(row["pipeline"]) if row.get("pipeline") else None
        return cross_validate(pipeline_preparer(pl, seed), ds, spec, folds, fw)[0]
    return run_baseline_arm(kind, cfg.baseline_params.get(kind, {}), ds, spec, seed,
                            cfg.ga.k_folds, fw, folds)["report"]


def row_metrics(row: dict) -> dict:
    return {k: (float(row[k]) if row.get(k) not in (None, "") else None)
            for k in _REPORT_COLUMNS}


def report_metrics(rep: EvalReport) -> dict:
    return {k: (None if not math.isfinite(getattr(rep, k)) else float(repr(getattr(rep, k))))
            for k in _REPORT_COLUMNS}


def default_jobs() -> int:
    return max(1, (os.cpu_count() or 1))
