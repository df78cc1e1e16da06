"""Performance and group-fairness metrics and the scalar fitness.

Conventions: ``a == 0`` is the unprivileged group, ``a == 1`` the privileged
one; "favorable" means a predicted label of 1. Confusion counts are
unweighted (evaluation folds are never reweighted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateGroupError, UndefinedMetricError

DI_CAP = 10.0
FS_MODES = ("deviation", "literal")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: float = 0
    fp: float = 0
    tn: float = 0
    fn: float = 0

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_labels(cls, preds, labels) -> "ConfusionCounts":
        p = np.asarray(preds).astype(bool)
        t = np.asarray(labels).astype(bool)
        return cls(int((p & t).sum()), int((p & ~t).sum()),
                   int((~p & ~t).sum()), int((~p & t).sum()))


def precision_recall(c: ConfusionCounts) -> tuple:
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else 0.0
    return float(precision), float(recall)


def pr_auc(scores, labels) -> float:
    """Step-wise area under the precision-recall curve.

    One curve point per distinct score (tied scores enter together), starting
    from recall 0; the area is ``sum((R[i+1] - R[i]) * P[i+1])``.
    """
    s = np.asarray(scores, dtype=float)
    t = np.asarray(labels).astype(np.int64)
    n_pos = int(t.sum())
    if n_pos == 0:
        raise UndefinedMetricError("PR-AUC undefined without positive labels")
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    tp = np.cumsum(t)
    # last index of every run of equal scores
    ends = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    tp = tp[ends]
    predicted = ends + 1
    precision = tp / predicted
    recall = tp / n_pos
    widths = np.diff(np.r_[0.0, recall])
    return float((widths * precision).sum())


def _rate(mask):
    return float(mask.mean())


def group_fairness(preds, labels, a) -> tuple:
    """``(spd, eod, di)`` of binary predictions across protected groups."""
    p = np.asarray(preds).astype(np.int64)
    t = np.asarray(labels).astype(np.int64)
    g = np.asarray(a).astype(np.int64)
    un, pr = g == 0, g == 1
    if not un.any() or not pr.any():
        raise DegenerateGroupError("both protected groups must be present")
    pos_un, pos_pr = un & (t == 1), pr & (t == 1)
    if not pos_un.any() or not pos_pr.any():
        raise DegenerateGroupError("equal opportunity needs positives in both groups")
    rate_un, rate_pr = _rate(p[un] == 1), _rate(p[pr] == 1)
    spd = rate_un - rate_pr
    eod = _rate(p[pos_un] == 1) - _rate(p[pos_pr] == 1)
    if rate_pr == 0.0:
        di = 1.0 if rate_un == 0.0 else DI_CAP
    else:
        di = min(rate_un / rate_pr, DI_CAP)
    return spd, eod, di


@dataclass(frozen=True)
class FitnessWeights:
    """Trade-off weights: ``fitness = w_perf * PS - w_fair * FS``."""

    w_perf: float = 0.5
    w_fair: float = 0.5
    fs_mode: str = "deviation"

    def __post_init__(self):
        if self.w_perf < 0 or self.w_fair < 0 or self.w_perf + self.w_fair <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
        if self.fs_mode not in FS_MODES:
            raise ValueError(f"fs_mode must be one of {FS_MODES}")

    def to_dict(self) -> dict:
        return {"w_perf": self.w_perf, "w_fair": self.w_fair, "fs_mode": self.fs_mode}

    @classmethod
    def from_dict(cls, d) -> "FitnessWeights":
        return cls(float(d.get("w_perf", 0.5)), float(d.get("w_fair", 0.5)),
                   d.get("fs_mode", "deviation"))


def fairness_score(spd, eod, di, mode="deviation") -> float:
    """Sum of absolute deviations from the unbiased point.

    ``deviation`` measures DI by ``min(1, |1 - di|)`` since its unbiased value
    is 1; ``literal`` adds ``|di|`` as is.
    """
    if mode == "deviation":
        return abs(spd) + abs(eod) + min(1.0, abs(1.0 - di))
    if mode == "literal":
        return abs(spd) + abs(eod) + abs(di)
    raise ValueError(f"unknown fs_mode {mode!r}")


def fitness_value(ps, fs, fw: FitnessWeights = FitnessWeights()) -> float:
    return fw.w_perf * ps - fw.w_fair * fs


def fitness(pr_auc_value, spd, eod, di, fw: FitnessWeights = FitnessWeights()) -> tuple:
    """``(ps, fs, fitness)`` from the metric constituents."""
    ps = float(pr_auc_value)
    fs = fairness_score(spd, eod, di, fw.fs_mode)
    return ps, fs, fitness_value(ps, fs, fw)


METRIC_FIELDS = ("precision", "recall", "pr_auc", "spd", "eod", "di")


def evaluate_predictions(scores, labels, a, threshold=0.5) -> dict:
    """All per-fold metric constituents from scores, true labels and groups."""
    scores = np.asarray(scores, dtype=float)
    preds = (scores >= threshold).astype(np.int64)
    precision, recall = precision_recall(ConfusionCounts.from_labels(preds, labels))
    spd, eod, di = group_fairness(preds, labels, a)
    return {"precision": precision, "recall": recall, "pr_auc": pr_auc(scores, labels),
            "spd": spd, "eod": eod, "di": di}


def _clean(v):
    return None if v is None or not math.isfinite(v) else float(v)


@dataclass(frozen=True)
class EvalReport:
    """Fold-averaged metrics for one (preparation, model) evaluation.

    ``spd``, ``eod`` and ``di`` are means over folds; ``fs`` and ``fitness``
    are recomputed from those means, so they can be checked from the stored
    fields alone.
    """

    precision: float
    recall: float
    pr_auc: float
    spd: float
    eod: float
    di: float
    ps: float
    fs: float
    fitness: float
    weights: FitnessWeights = FitnessWeights()
    folds: tuple = ()
    error: Optional[str] = None

    @classmethod
    def from_folds(cls, folds, fw: FitnessWeights = FitnessWeights()) -> "EvalReport":
        means = {k: float(np.mean([f[k] for f in folds])) for k in METRIC_FIELDS}
        ps, fs, fit = fitness(means["pr_auc"], means["spd"], means["eod"], means["di"], fw)
        per_fold = []
        for f in folds:
            fps, ffs, ffit = fitness(f["pr_auc"], f["spd"], f["eod"], f["di"], fw)
            per_fold.append({**{k: float(f[k]) for k in METRIC_FIELDS},
                             "ps": fps, "fs": ffs, "fitness": ffit})
        return cls(ps=ps, fs=fs, fitness=fit, weights=fw, folds=tuple(per_fold), **means)

    @classmethod
    def failed(cls, error: str, fw: FitnessWeights = FitnessWeights()) -> "EvalReport":
        nan = float("nan")
        return cls(nan, nan, nan, nan, nan, nan, nan, math.inf, -math.inf, fw, (), error)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        out = {k: _clean(getattr(self, k)) for k in METRIC_FIELDS + ("ps", "fs", "fitness")}
        out["fs_mode"] = self.weights.fs_mode
        out["weights"] = {"w_perf": self.weights.w_perf, "w_fair": self.weights.w_fair}
        out["folds"] = [{k: _clean(v) for k, v in f.items()} for f in self.folds]
        out["error"] = self.error
        return out

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        fw = FitnessWeights(d["weights"]["w_perf"], d["weights"]["w_fair"], d["fs_mode"])

        def num(v, default=float("nan")):
            return default if v is None else float(v)

        return cls(
            **{k: num(d[k]) for k in METRIC_FIELDS}, ps=num(d["ps"]),
            fs=num(d["fs"], math.inf), fitness=num(d["fitness"], -math.inf),
            weights=fw, folds=tuple(dict(f) for f in d.get("folds", ())), error=d.get("error"),
        )
