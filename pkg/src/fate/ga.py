"""Genetic search over data-preparation pipelines.

Each generation: evaluate every individual (k-fold, memoized per pipeline),
keep the top half as the mating pool, refill the population with crossover +
mutation offspring, and carry the single best individual over unchanged.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._seeding import derive_seed
from .data import Dataset, FoldPlan, stratified_kfold
from .errors import SearchAbortedError
from .evaluation import evaluate_pipeline
from .metrics import EvalReport, FitnessWeights
from .models import ClassifierSpec
from .transforms import KINDS, Pipeline, Practice

log = logging.getLogger(__name__)


def _catalog(items) -> tuple:
    out = tuple(p if isinstance(p, Practice) else Practice.from_dict(p) for p in items)
    kinds = [p.kind for p in out]
    if len(set(kinds)) != len(kinds):
        raise ValueError("catalog kinds must be distinct")
    return out


@dataclass(frozen=True)
class GAConfig:
    generations: int = 10
    population: int = 5
    crossover_rate: float = 0.25
    mutation_rate: float = 0.25
    l_max: int = 4
    fitness_weights: FitnessWeights = FitnessWeights()
    k_folds: int = 5
    seed: int = 0
    catalog: tuple = tuple(Practice(k) for k in KINDS)

    def __post_init__(self):
        object.__setattr__(self, "catalog", _catalog(self.catalog))
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.l_max < 1:
            raise ValueError("l_max must be >= 1")
        if not self.catalog:
            raise ValueError("catalog must not be empty")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")

    def to_dict(self) -> dict:
        return {
            "generations": self.generations,
            "population": self.population,
            "crossover_rate": self.crossover_rate,
            "mutation_rate": self.mutation_rate,
            "l_max": self.l_max,
            "fitness_weights": self.fitness_weights.to_dict(),
            "k_folds": self.k_folds,
            "seed": self.seed,
            "catalog": [p.to_dict() for p in self.catalog],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GAConfig":
        d = dict(d)
        aliases = {"G": "generations", "N": "population", "crossover": "crossover_rate",
                   "mutation": "mutation_rate"}
        for short, name in aliases.items():
            if short in d:
                d[name] = d.pop(short)
        if "fitness_weights" in d:
            d["fitness_weights"] = FitnessWeights.from_dict(d["fitness_weights"])
        if "catalog" in d:
            d["catalog"] = _catalog(d["catalog"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown GA settings {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Individual:
    pipeline: Pipeline
    report: Optional[EvalReport] = None

    @property
    def fitness(self) -> Optional[float]:
        return None if self.report is None else self.report.fitness

    def sort_key(self):
        """Best first: higher fitness, then lower FS, then serialization."""
        fit = -math.inf if self.report is None else self.report.fitness
        fs = math.inf if self.report is None or math.isnan(self.report.fs) else self.report.fs
        return (-fit, fs, self.pipeline.key())


@dataclass(frozen=True)
class RunResult:
    best: Individual
    history: tuple  # ((best_fitness, mean_fitness), ...) per generation
    baseline_reports: dict = field(default_factory=dict)
    wall_time: float = 0.0
    config: Optional[GAConfig] = None
    evaluations: int = 0

    def to_dict(self, timing: bool = False) -> dict:
        def fin(v):
            return v if v is not None and math.isfinite(v) else None

        out = {
            "best_pipeline": self.best.pipeline.to_list(),
            "best_report": self.best.report.to_dict(),
            "history": [{"generation": g + 1, "best_fitness": fin(b), "mean_fitness": fin(m)}
                        for g, (b, m) in enumerate(self.history)],
            "baseline_reports": {k: v.to_dict() for k, v in sorted(self.baseline_reports.items())},
            "evaluations": self.evaluations,
        }
        if self.config is not None:
            out["config"] = self.config.to_dict()
        if timing:
            out["wall_time_seconds"] = self.wall_time
        return out

    def to_json(self, timing: bool = False) -> str:
        """Deterministic for a fixed configuration unless ``timing`` is set."""
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2) + "\n"

    def history_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["generation", "best_fitness", "mean_fitness"])
        for g, (b, m) in enumerate(self.history, start=1):
            out.writerow([g, repr(b), repr(m)])
        return buf.getvalue()


# -- operators ----------------------------------------------------------------

def random_pipeline(catalog, l_max, rng) -> Pipeline:
    length = int(rng.integers(1, min(l_max, len(catalog)) + 1))
    picks = rng.choice(len(catalog), size=length, replace=False)
    return Pipeline([catalog[i] for i in picks])


def initialize_population(cfg: GAConfig, rng=None) -> list:
    """``N`` random pipelines of uniform length in ``[1, min(l_max, |catalog|)]``.

    Individuals are distinct while the pipeline space allows: duplicates are
    redrawn (up to ``50 N`` draws), then any shortfall is filled from the
    unused pipelines in random order. Only when ``N`` exceeds the space size
    do repeats appear.
    """
    if rng is None:
        rng = np.random.default_rng(derive_seed(cfg.seed, "ga"))
    out, seen = [], set()
    for _ in range(50 * cfg.population):
        if len(out) == cfg.population:
            break
        pl = random_pipeline(cfg.catalog, cfg.l_max, rng)
        if pl.key() not in seen:
            seen.add(pl.key())
            out.append(pl)
    if len(out) < cfg.population:
        rest = [pl for pl in enumerate_pipelines(cfg.catalog, cfg.l_max) if pl.key() not in seen]
        rest = [rest[i] for i in rng.permutation(len(rest))]
        out += rest[: cfg.population - len(out)]
        while len(out) < cfg.population:
            out.append(random_pipeline(cfg.catalog, cfg.l_max, rng))
    return [Individual(pl) for pl in out]


def select_mating_pool(population) -> list:
    """Top ``ceil(N/2)`` individuals, best first."""
    ranked = sorted(population, key=Individual.sort_key)
    return ranked[: math.ceil(len(ranked) / 2)]


def _repair(steps, fallback, l_max) -> Pipeline:
    seen, out = set(), []
    for s in steps:
        if s.kind not in seen:
            seen.add(s.kind)
            out.append(s)
    out = out[:l_max]
    return Pipeline(out or [fallback])


def single_point(p1: Pipeline, p2: Pipeline, cut1: int, cut2: int, l_max: int) -> tuple:
    """Swap tails at the given cut points, then de-duplicate and clip."""
    s1, s2 = p1.steps, p2.steps
    o1 = _repair(s1[:cut1] + s2[cut2:], s1[0], l_max)
    o2 = _repair(s2[:cut2] + s1[cut1:], s2[0], l_max)
    return o1, o2


def _cut(length: int, rng) -> int:
    if length == 1:
        return int(rng.integers(0, 2))
    return int(rng.integers(1, length))


def crossover(p1: Individual, p2: Individual, rate: float, rng, l_max: int = 4) -> tuple:
    """Single-point crossover with probability ``rate``; otherwise copies."""
    if rng.random() >= rate:
        return p1, p2
    c1, c2 = _cut(len(p1.pipeline), rng), _cut(len(p2.pipeline), rng)
    o1, o2 = single_point(p1.pipeline, p2.pipeline, c1, c2, l_max)
    return Individual(o1), Individual(o2)


def mutate(ind: Individual, rate: float, catalog, rng) -> Individual:
    """With probability ``rate`` replace one gene by an unused catalog practice."""
    if rng.random() >= rate:
        return ind
    steps = list(ind.pipeline.steps)
    present = {s.kind for s in steps}
    candidates = [p for p in catalog if p.kind not in present]
    if not candidates:
        return ind
    pos = int(rng.integers(len(steps)))
    steps[pos] = candidates[int(rng.integers(len(candidates)))]
    return Individual(Pipeline(steps))


def enumerate_pipelines(catalog, l_max: int) -> list:
    """Every valid pipeline: ordered selections of distinct practices."""
    catalog = _catalog(catalog)
    return [Pipeline(perm) for length in range(1, min(l_max, len(catalog)) + 1)
            for perm in itertools.permutations(catalog, length)]


# -- fitness evaluation ---------------------------------------------------------

class Evaluator:
    """Memoizing, optionally parallel, pipeline evaluator for one run."""

    def __init__(self, ds, spec, folds, cfg: GAConfig, jobs: int = 1):
        self.ds, self.spec, self.folds, self.cfg = ds, spec, folds, cfg
        self.memo: dict = {}
        self.jobs = jobs
        self._pool = None

    def __enter__(self):
        if self.jobs > 1:
            self._pool = ProcessPoolExecutor(
                max_workers=self.jobs, initializer=_init_worker,
                initargs=(self.ds, self.spec, self.folds, self.cfg.fitness_weights,
                          self.cfg.seed))
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()

    def evaluate(self, pl: Pipeline) -> EvalReport:
        key = pl.key()
        if key not in self.memo:
            self.memo[key] = evaluate_pipeline(pl, self.ds, self.spec, self.folds,
                                               self.cfg.fitness_weights, self.cfg.seed)
        return self.memo[key]

    def evaluate_all(self, population) -> list:
        todo, seen = [], set()
        for ind in population:
            key = ind.pipeline.key()
            if key not in self.memo and key not in seen:
                seen.add(key)
                todo.append(ind.pipeline)
        if self._pool is not None and len(todo) > 1:
            for pl, rep in zip(todo, self._pool.map(_worker_evaluate, todo)):
                self.memo[pl.key()] = rep
        else:
            for pl in todo:
                self.evaluate(pl)
        return [Individual(ind.pipeline, self.memo[ind.pipeline.key()]) for ind in population]


_WORKER: dict = {}


def _init_worker(ds, spec, folds, fw, seed):
    _WORKER.update(ds=ds, spec=spec, folds=folds, fw=fw, seed=seed)


def _worker_evaluate(pl):
    w = _WORKER
    return evaluate_pipeline(pl, w["ds"], w["spec"], w["folds"], w["fw"], w["seed"])


def evaluate_fitness(ind: Individual, ds: Dataset, spec: ClassifierSpec, cfg: GAConfig,
                     folds: Optional[FoldPlan] = None) -> EvalReport:
    """Stand-alone fitness evaluation of one individual (no memo)."""
    folds = folds or stratified_kfold(ds, cfg.k_folds, cfg.seed)
    return evaluate_pipeline(ind.pipeline, ds, spec, folds, cfg.fitness_weights, cfg.seed)


# -- main loop ------------------------------------------------------------------

def _breed(pool, cfg: GAConfig, rng) -> list:
    children = []
    m = len(pool)
    i = 0
    while len(children) < cfg.population - 1:
        p1, p2 = pool[i % m], pool[(i + 1) % m]
        for child in crossover(p1, p2, cfg.crossover_rate, rng, cfg.l_max):
            children.append(mutate(child, cfg.mutation_rate, cfg.catalog, rng))
        i += 1
    return children[: cfg.population - 1]


def run(cfg: GAConfig, ds: Dataset, spec: ClassifierSpec, folds: Optional[FoldPlan] = None,
        jobs: int = 1) -> RunResult:
    """Search for the best pipeline; returns it with its report and history."""
    t0 = time.perf_counter()
    folds = folds or stratified_kfold(ds, cfg.k_folds, cfg.seed)
    if folds.assignments.size != ds.n:
        raise ValueError("fold plan does not match the dataset")
    rng = np.random.default_rng(derive_seed(cfg.seed, "ga"))
    population = initialize_population(cfg, rng)
    history = []
    with Evaluator(ds, spec, folds, cfg, jobs) as ev:
        no_prep = evaluate_pipeline(None, ds, spec, folds, cfg.fitness_weights, cfg.seed)
        if not no_prep.ok:
            # dataset and model problems surface before the search starts
            raise SearchAbortedError(f"unprepared baseline failed: {no_prep.error}")
        for g in range(cfg.generations):
            population = ev.evaluate_all(population)
            fits = [ind.fitness for ind in population]
            finite = [f for f in fits if math.isfinite(f)]
            if not finite:
                errors = sorted({ind.report.error for ind in population})
                raise SearchAbortedError(
                    f"generation {g + 1}: every individual was disqualified: {errors[:3]}")
            history.append((max(fits), float(np.mean(finite))))
            log.debug("generation %d: best %.6f mean %.6f", g + 1, *history[-1])
            if g == cfg.generations - 1:
                break
            pool = select_mating_pool(population)
            population = [pool[0]] + _breed(pool, cfg, rng)
        best = min(population, key=Individual.sort_key)
        evaluations = len(ev.memo)
    return RunResult(best, tuple(history), {"no_prep": no_prep},
                     time.perf_counter() - t0, cfg, evaluations)
