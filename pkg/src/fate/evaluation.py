"""K-fold evaluation of a data-preparation step followed by a classifier."""

from __future__ import annotations

import time
from dataclasses import replace
from typing import Callable, Optional

from ._seeding import derive_seed
from .data import Dataset, FoldPlan
from .errors import FateError
from .metrics import EvalReport, FitnessWeights, evaluate_predictions
from .models import ClassifierSpec, predict_scores, train
from .transforms import Pipeline, apply_pipeline

# prepare(train, test, fold_index) -> (train', test')
Prepare = Callable[[Dataset, Dataset, int], tuple]


def cross_validate(prepare: Optional[Prepare], ds: Dataset, spec: ClassifierSpec,
                   folds: FoldPlan, fw: FitnessWeights = FitnessWeights()):
    """Run prepare + train + score on every fold.

    Returns ``(report, seconds)`` where ``seconds`` is the wall-clock time
    spent inside ``prepare`` and ``train`` only. Any package error on any
    fold disqualifies the whole evaluation (fitness ``-inf``).
    """
    per_fold = []
    seconds = 0.0
    for f, (tr_idx, te_idx) in enumerate(folds.splits()):
        tr, te = ds.subset(tr_idx), ds.subset(te_idx)
        try:
            t0 = time.perf_counter()
            if prepare is not None:
                tr, te = prepare(tr, te, f)
            model = train(replace(spec, seed=derive_seed(spec.seed, "fold", f)), tr)
            seconds += time.perf_counter() - t0
            scores = predict_scores(model, te)
            per_fold.append(evaluate_predictions(scores, te.y, te.a))
        except FateError as exc:
            return EvalReport.failed(f"fold {f}: {type(exc).__name__}: {exc}", fw), seconds
    return EvalReport.from_folds(per_fold, fw), seconds


def pipeline_preparer(pl: Optional[Pipeline], seed: int) -> Optional[Prepare]:
    """Prepare callback drawing randomness from (seed, pipeline, fold)."""
    if pl is None:
        return None
    key = pl.key()

    def prepare(tr, te, fold):
        return apply_pipeline(pl, tr, te, derive_seed(seed, key, fold))

    return prepare


def evaluate_pipeline(pl: Optional[Pipeline], ds: Dataset, spec: ClassifierSpec,
                      folds: FoldPlan, fw: FitnessWeights = FitnessWeights(),
                      seed: int = 0) -> EvalReport:
    """Cross-validated report for ``pl`` (``None`` = no preparation)."""
    return cross_validate(pipeline_preparer(pl, seed), ds, spec, folds, fw)[0]
