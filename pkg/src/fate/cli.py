"""Command-line entry point: ``fate optimize|sweep|compare|baseline|metrics|replay``.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels
from .data import stratified_kfold
from .errors import ConfigError, FateError
from .ga import run
from .harness import (ExperimentConfig, read_table, replay_row, report_metrics, row_metrics,
                      run_baseline_arm, run_compare, run_sweep)
from .metrics import FitnessWeights, evaluate_predictions, fitness

log = logging.getLogger("fate")


def _configure(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    ga = cfg.ga
    if args.fs_mode:
        fw = ga.fitness_weights
        ga = replace(ga, fitness_weights=FitnessWeights(fw.w_perf, fw.w_fair, args.fs_mode))
    seed = cfg.seed if args.seed is None else args.seed
    return replace(cfg, ga=replace(ga, seed=seed), seed=seed)


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out) if args.out else cfg.base_dir / cfg.out


def _attach_log(path: Path):
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger().addHandler(handler)
    return handler


def cmd_optimize(args) -> int:
    cfg = _configure(args)
    datasets = cfg.load_datasets()  # validate before touching the output directory
    out = _out_dir(args, cfg)
    combos = [(d, s) for d in datasets for s in cfg.models]
    for (dname, ds), spec in combos:
        target = out if len(combos) == 1 else out / f"{dname}_{spec.short_name}"
        target.mkdir(parents=True, exist_ok=True)
        handler = _attach_log(target / "run.log")
        try:
            log.info("optimize %s with %s, seed %d, backend %s", dname, spec.family, cfg.seed,
                     kernels.BACKEND)
            folds = stratified_kfold(ds, cfg.ga.k_folds, cfg.seed)
            result = run(cfg.ga, ds, spec, folds, jobs=args.jobs)
            (target / "best_pipeline.json").write_text(result.best.pipeline.to_json() + "\n")
            report = {**result.to_dict(), "dataset": dname, "model": spec.to_dict(),
                      "seed": cfg.seed, "config_hash": cfg.config_hash}
            (target / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
            (target / "history.csv").write_text(result.history_csv())
            log.info("best %s fitness=%.6f ps=%.6f fs=%.6f (%d evaluations, %.2f s)",
                     result.best.pipeline.kinds, result.best.report.fitness,
                     result.best.report.ps, result.best.report.fs, result.evaluations,
                     result.wall_time)
        finally:
            logging.getLogger().removeHandler(handler)
            handler.close()
    return 0


def cmd_sweep(args) -> int:
    cfg = _configure(args)
    path = run_sweep(cfg, _out_dir(args, cfg), jobs=args.jobs, append=args.append)
    print(path)
    return 0


def cmd_compare(args) -> int:
    cfg = _configure(args)
    if args.baseline:
        cfg = replace(cfg, baselines=list(args.baseline))
    records, stats = run_compare(cfg, _out_dir(args, cfg), jobs=args.jobs, append=args.append)
    for row in stats:
        print(f"{row['hypothesis']:>4} {row['metric']:<24} fate vs {row['arm_y']:<10} "
              f"p={row.get('p_value', float('nan')):.4g} A12={row.get('a12', float('nan')):.3f} "
              f"{row.get('direction', row.get('error'))}")
    return 0


def cmd_baseline(args) -> int:
    cfg = _configure(args)
    if not args.baseline or len(args.baseline) != 1:
        raise ConfigError("baseline needs exactly one --baseline NAME")
    name = args.baseline[0]
    if name not in ("fairsmote", "reweighing", "dir", "no_prep"):
        raise ConfigError(f"unknown baseline {name!r}")
    datasets = cfg.load_datasets()
    out = _out_dir(args, cfg)
    rows = []
    for (dname, ds), spec in ((d, s) for d in datasets for s in cfg.models):
        res = run_baseline_arm(name, cfg.baseline_params.get(name, {}), ds, spec, cfg.seed,
                               cfg.ga.k_folds, cfg.ga.fitness_weights)
        rep = res["report"]
        rows.append({"baseline": name, "dataset": dname, "model": spec.family, "seed": cfg.seed,
                     "config_hash": cfg.config_hash,
                     "execution_time_seconds": res["execution_time_seconds"],
                     "report": rep.to_dict()})
        print(f"{dname} {spec.short_name} {name}: fitness={rep.fitness:.6f} ps={rep.ps:.6f} "
              f"fs={rep.fs:.6f}" + (f" error={rep.error}" if rep.error else ""))
    out.mkdir(parents=True, exist_ok=True)
    (out / f"baseline_{name}.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return 0 if all(r["report"]["error"] is None for r in rows) else 1


def cmd_metrics(args) -> int:
    if not args.predictions:
        raise ConfigError("metrics needs --predictions CSV")
    try:
        with open(args.predictions, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise ConfigError(f"predictions file {args.predictions} not found") from None
    try:
        scores = np.array([float(r["score"]) for r in rows])
        labels = np.array([int(float(r["label"])) for r in rows])
        prot = np.array([int(float(r["protected"])) for r in rows])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"predictions need numeric score,label,protected columns ({exc})") \
            from None
    fw = FitnessWeights(fs_mode=args.fs_mode or "deviation")
    m = evaluate_predictions(scores, labels, prot, threshold=args.threshold)
    ps, fs, fit = fitness(m["pr_auc"], m["spd"], m["eod"], m["di"], fw)
    out = {**m, "ps": ps, "fs": fs, "fitness": fit, "n": int(scores.size),
           "threshold": args.threshold, "fs_mode": fw.fs_mode}
    text = json.dumps(out, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "metrics.json").write_text(text + "\n")
    return 0


def cmd_replay(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if not args.table:
        raise ConfigError("replay needs --table CSV")
    rows = read_table(args.table)
    if not 0 <= args.row < len(rows):
        raise ConfigError(f"row {args.row} out of range (table has {len(rows)} rows)")
    row = rows[args.row]
    recorded = row_metrics(row)
    replayed = report_metrics(replay_row(cfg, row))
    same = recorded == replayed
    print(json.dumps({"recorded": recorded, "replayed": replayed, "identical": same}, indent=2))
    return 0 if same else 1


COMMANDS = {"optimize": cmd_optimize, "sweep": cmd_sweep, "compare": cmd_compare,
            "baseline": cmd_baseline, "metrics": cmd_metrics, "replay": cmd_replay}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fate", description="Genetic search for fairness-aware "
                                "data-preparation pipelines.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=name != "metrics", help="experiment JSON")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--jobs", type=int, default=1, help="worker processes")
        s.add_argument("--out", default=None, help="output directory")
        s.add_argument("--fs-mode", choices=("deviation", "literal"), default=None)
        s.add_argument("--baseline", action="append", default=None,
                       help="baseline name (repeatable)")
        s.add_argument("--append", action="store_true",
                       help="append to existing CSV tables (header must match)")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "metrics":
            s.add_argument("--predictions", help="CSV with score,label,protected columns")
            s.add_argument("--threshold", type=float, default=0.5)
        if name == "replay":
            s.add_argument("--table", help="results.csv or comparison.csv")
            s.add_argument("--row", type=int, default=0, help="0-based data row")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    stderr = logging.StreamHandler()
    stderr.setLevel(logging.INFO if args.verbose else logging.WARNING)
    stderr.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.addHandler(stderr)
    logging.getLogger("fate").setLevel(logging.INFO)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FateError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    finally:
        root.removeHandler(stderr)


if __name__ == "__main__":
    sys.exit(main())
