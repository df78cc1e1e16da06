"""Weighted binary classifiers trained from scratch.

Every family honours instance weights and emits scores in ``[0, 1]``:
logistic regression and linear SVC by weighting each row's loss term, random
forest through weight-proportional bootstrap sampling, gradient boosting by
weighting gradients and Hessians.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import NumericError, ShapeError, SingleClassError
from .trees import Tree, fit_forest, grow_regression_tree

LOGISTIC = "LogisticRegression"
LINEAR_SVC = "LinearSVC"
RANDOM_FOREST = "RandomForest"
GRADIENT_BOOSTING = "GradientBoosting"
FAMILIES = (LOGISTIC, LINEAR_SVC, RANDOM_FOREST, GRADIENT_BOOSTING)

ALIASES = {
    "lr": LOGISTIC, "logreg": LOGISTIC, "logistic": LOGISTIC,
    "svc": LINEAR_SVC, "svm": LINEAR_SVC, "linearsvc": LINEAR_SVC,
    "rf": RANDOM_FOREST, "forest": RANDOM_FOREST,
    "gb": GRADIENT_BOOSTING, "xgb": GRADIENT_BOOSTING, "boosting": GRADIENT_BOOSTING,
}

DEFAULTS = {
    LOGISTIC: {"learning_rate": 0.1, "epochs": 500, "l2": 1e-4},
    LINEAR_SVC: {"learning_rate": 0.1, "epochs": 500, "l2": 1e-4},
    RANDOM_FOREST: {"n_trees": 100, "max_depth": 8, "feature_fraction": "sqrt"},
    GRADIENT_BOOSTING: {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 2},
}

THRESHOLD = 0.5


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        family = ALIASES.get(str(self.family).lower(), self.family)
        if family not in FAMILIES:
            raise ValueError(f"unknown classifier family {self.family!r}")
        unknown = set(self.hyperparams) - set(DEFAULTS[family])
        if unknown:
            raise ValueError(f"{family}: unknown hyperparameters {sorted(unknown)}")
        hp = {**DEFAULTS[family], **self.hyperparams}
        for name, value in hp.items():
            if name == "feature_fraction":
                if value != "sqrt" and not 0 < float(value) <= 1:
                    raise ValueError("feature_fraction must be 'sqrt' or in (0, 1]")
            elif name in ("epochs", "max_depth"):
                if int(value) != value or value < 0:
                    raise ValueError(f"{name} must be a non-negative integer")
            elif name in ("n_trees", "n_estimators"):
                if int(value) != value or value < 1:
                    raise ValueError(f"{name} must be a positive integer")
            elif name == "l2":
                if value < 0:
                    raise ValueError("l2 must be >= 0")
            elif not value > 0:
                raise ValueError(f"{name} must be > 0")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "hyperparams", hp)

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))

    def to_dict(self) -> dict:
        return {"family": self.family, "hyperparams": dict(sorted(self.hyperparams.items())),
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d) -> "ClassifierSpec":
        if isinstance(d, str):
            return cls(d)
        return cls(d["family"], dict(d.get("hyperparams", {})), int(d.get("seed", 0)))

    @property
    def short_name(self) -> str:
        return {LOGISTIC: "lr", LINEAR_SVC: "svc", RANDOM_FOREST: "rf",
                GRADIENT_BOOSTING: "gb"}[self.family]


@dataclass(frozen=True, eq=False)
class TrainedModel:
    family: str
    d: int
    coef: np.ndarray = None
    intercept: float = 0.0
    trees: tuple = ()
    base_score: float = 0.0
    learning_rate: float = 1.0
    epochs_run: int = 0
    loss_trace: tuple = ()

    def to_dict(self) -> dict:
        out = {"family": self.family, "d": self.d, "epochs_run": self.epochs_run,
               "loss_trace": list(self.loss_trace)}
        if self.coef is not None:
            out["coef"] = self.coef.tolist()
            out["intercept"] = self.intercept
        if self.trees:
            out["trees"] = [t.to_dict() for t in self.trees]
            out["base_score"] = self.base_score
            out["learning_rate"] = self.learning_rate
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d) -> "TrainedModel":
        return cls(
            family=d["family"], d=d["d"],
            coef=None if "coef" not in d else np.asarray(d["coef"], float),
            intercept=d.get("intercept", 0.0),
            trees=tuple(Tree.from_dict(t) for t in d.get("trees", ())),
            base_score=d.get("base_score", 0.0),
            learning_rate=d.get("learning_rate", 1.0),
            epochs_run=d.get("epochs_run", 0),
            loss_trace=tuple(d.get("loss_trace", ())),
        )


# -- linear models ------------------------------------------------------------

def logistic_loss_grad(coef, intercept, X, y, w, l2):
    """Weighted mean log-loss plus ``l2/2 * |coef|^2`` and its gradient."""
    z = X @ coef + intercept
    wsum = w.sum()
    loss = float((w * (np.logaddexp(0.0, z) - y * z)).sum() / wsum + 0.5 * l2 * coef @ coef)
    r = w * (expit(z) - y) / wsum
    return loss, X.T @ r + l2 * coef, float(r.sum())


def hinge_loss_grad(coef, intercept, X, y, w, l2):
    """Weighted mean hinge loss plus ``l2/2 * |coef|^2`` and a subgradient."""
    s = 2.0 * y - 1.0
    margin = s * (X @ coef + intercept)
    wsum = w.sum()
    active = margin < 1.0
    loss = float((w * np.maximum(0.0, 1.0 - margin)).sum() / wsum + 0.5 * l2 * coef @ coef)
    r = np.where(active, -w * s, 0.0) / wsum
    return loss, X.T @ r + l2 * coef, float(r.sum())


def _fit_linear(loss_grad, X, y, w, hp):
    coef = np.zeros(X.shape[1])
    intercept = 0.0
    lr, l2 = float(hp["learning_rate"]), float(hp["l2"])
    trace = []
    for _ in range(int(hp["epochs"])):
        loss, g, gb = loss_grad(coef, intercept, X, y, w, l2)
        trace.append(loss)
        coef = coef - lr * g
        intercept -= lr * gb
    if trace:
        trace.append(loss_grad(coef, intercept, X, y, w, l2)[0])
    return coef, intercept, tuple(trace)


# -- public API ---------------------------------------------------------------

def train(spec: ClassifierSpec, ds: Dataset) -> TrainedModel:
    """Fit ``spec`` on ``ds`` (deterministic for a given ``spec.seed``)."""
    if ds.d < 1:
        raise ShapeError("need at least one feature")
    if not np.isfinite(ds.x).all():
        raise NumericError("non-finite feature values")
    if np.unique(ds.y).size < 2:
        raise SingleClassError("training data contains a single label value")
    X, y, w, hp = ds.x, ds.y.astype(float), ds.w, spec.hyperparams
    fam = spec.family
    if fam in (LOGISTIC, LINEAR_SVC):
        lg = logistic_loss_grad if fam == LOGISTIC else hinge_loss_grad
        coef, b, trace = _fit_linear(lg, X, y, w, hp)
        return TrainedModel(fam, ds.d, coef=coef, intercept=b,
                            epochs_run=int(hp["epochs"]), loss_trace=trace)
    if fam == RANDOM_FOREST:
        trees = fit_forest(X, y, w, int(hp["n_trees"]), int(hp["max_depth"]),
                           hp["feature_fraction"], spec.seed)
        return TrainedModel(fam, ds.d, trees=tuple(trees))
    # gradient boosting on logistic loss
    p0 = float(np.clip((w * y).sum() / w.sum(), 1e-6, 1 - 1e-6))
    base = float(np.log(p0 / (1 - p0)))
    eta = float(hp["learning_rate"])
    F = np.full(ds.n, base)
    trees, trace = [], []
    for _ in range(int(hp["n_estimators"])):
        p = expit(F)
        trace.append(float((w * (np.logaddexp(0.0, F) - y * F)).sum() / w.sum()))
        tree = grow_regression_tree(X, y - p, p * (1 - p), w, int(hp["max_depth"]))
        F = F + eta * tree.predict(X)
        trees.append(tree)
    return TrainedModel(fam, ds.d, trees=tuple(trees), base_score=base,
                        learning_rate=eta, epochs_run=len(trees), loss_trace=tuple(trace))


def predict_scores(m: TrainedModel, ds: Dataset) -> np.ndarray:
    if ds.d != m.d:
        raise ShapeError(f"model expects {m.d} features, got {ds.d}")
    X = ds.x
    if m.family in (LOGISTIC, LINEAR_SVC):
        return expit(X @ m.coef + m.intercept)
    if m.family == RANDOM_FOREST:
        total = np.zeros(ds.n)
        for t in m.trees:
            total += t.predict(X)
        return total / len(m.trees)
    F = np.full(ds.n, m.base_score)
    for t in m.trees:
        F += m.learning_rate * t.predict(X)
    return expit(F)


def predict_labels(m: TrainedModel, ds: Dataset, threshold: float = THRESHOLD) -> np.ndarray:
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return (predict_scores(m, ds) >= threshold).astype(np.int64)
