"""Fairness-aware data-preparation practices and their sequential application.

Every practice is fitted on the training split only. Scalers rewrite the
numeric feature columns of both splits with training statistics; all other
practices touch the training split alone (rows or weights), so the test split
keeps its rows, labels and protected values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from ._seeding import derive_seed
from .data import Dataset
from .errors import DegenerateGroupError, FateError

STANDARD_SCALE = "StandardScale"
MINMAX_SCALE = "MinMaxScale"
RESAMPLE_OVER = "ResampleOver"
RESAMPLE_UNDER = "ResampleUnder"
RESAMPLE_STRATIFIED = "ResampleStratified"
CLUSTER_REBALANCE = "ClusterRebalance"
IP_WEIGHT = "IPWeight"
MATCH = "Match"

KINDS = (
    STANDARD_SCALE,
    MINMAX_SCALE,
    RESAMPLE_OVER,
    RESAMPLE_UNDER,
    RESAMPLE_STRATIFIED,
    CLUSTER_REBALANCE,
    IP_WEIGHT,
    MATCH,
)
ROW_ALTERING = frozenset({RESAMPLE_OVER, RESAMPLE_UNDER, RESAMPLE_STRATIFIED,
                          CLUSTER_REBALANCE, MATCH})
_DEFAULT_PARAMS = {CLUSTER_REBALANCE: {"k_clusters": 5}}
_ALLOWED_PARAMS = {CLUSTER_REBALANCE: {"k_clusters"}, MATCH: {"max_distance"}}


@dataclass(frozen=True)
class Practice:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown practice kind {self.kind!r}")
        params = {**_DEFAULT_PARAMS.get(self.kind, {}), **dict(self.params)}
        unknown = set(params) - _ALLOWED_PARAMS.get(self.kind, set())
        if unknown:
            raise ValueError(f"{self.kind}: unknown parameters {sorted(unknown)}")
        if self.kind == CLUSTER_REBALANCE:
            k = params["k_clusters"]
            if int(k) != k or k < 1:
                raise ValueError("k_clusters must be an integer >= 1")
            params["k_clusters"] = int(k)
        if self.kind == MATCH and params.get("max_distance") is not None:
            if not params["max_distance"] > 0:
                raise ValueError("max_distance must be > 0")
            params["max_distance"] = float(params["max_distance"])
        object.__setattr__(self, "params", params)

    def __hash__(self):
        return hash(self.key())

    def key(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(sorted(self.params.items()))}

    @classmethod
    def from_dict(cls, d) -> "Practice":
        if isinstance(d, str):
            return cls(d)
        return cls(d["kind"], d.get("params", {}))


class Pipeline:
    """Ordered, non-empty sequence of practices with distinct kinds."""

    __slots__ = ("steps",)

    def __init__(self, steps):
        steps = tuple(s if isinstance(s, Practice) else Practice.from_dict(s) for s in steps)
        if not steps:
            raise ValueError("a pipeline needs at least one step")
        kinds = [s.kind for s in steps]
        if len(set(kinds)) != len(kinds):
            raise ValueError(f"duplicate practice kinds in pipeline: {kinds}")
        object.__setattr__(self, "steps", steps)

    def __setattr__(self, name, value):
        raise AttributeError("Pipeline is immutable")

    def __reduce__(self):
        return (Pipeline, (self.steps,))

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    def __eq__(self, other):
        return isinstance(other, Pipeline) and self.steps == other.steps

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Pipeline({', '.join(s.kind for s in self.steps)})"

    @property
    def kinds(self) -> tuple:
        return tuple(s.kind for s in self.steps)

    def to_list(self) -> list:
        return [s.to_dict() for s in self.steps]

    def key(self) -> str:
        """Canonical serialization; identity for memoization and tie-breaks."""
        return json.dumps(self.to_list(), sort_keys=True, separators=(",", ":"))

    def to_json(self) -> str:
        return json.dumps(self.to_list(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Pipeline":
        return cls(json.loads(text))


# -- individual practices -----------------------------------------------------

def _scale(train: Dataset, test: Dataset, center, spread):
    num = train.numeric_mask
    safe = np.where(spread > 0, spread, 1.0)

    def apply(ds):
        x = ds.x.copy()
        z = (x[:, num] - center) / safe
        z[:, spread == 0] = 0.0
        x[:, num] = z
        return ds.replace(x=x)

    return apply(train), apply(test)


def _standard_scale(train, test):
    xs = train.x[:, train.numeric_mask]
    return _scale(train, test, xs.mean(axis=0), xs.std(axis=0))


def _minmax_scale(train, test):
    xs = train.x[:, train.numeric_mask]
    lo = xs.min(axis=0)
    return _scale(train, test, lo, xs.max(axis=0) - lo)


def _require_cells(ds: Dataset, kind: str):
    counts = ds.cell_counts()
    empty = [c for c, v in counts.items() if v == 0]
    if empty:
        raise DegenerateGroupError(f"{kind}: empty (y, a) cell(s) {empty} in training data")


def _resample_over(train, rng):
    cells = train.cell_index()
    target = np.bincount(cells, minlength=4).max()
    extra = []
    for c in range(4):
        idx = np.flatnonzero(cells == c)
        need = target - idx.size
        if need > 0:
            extra.append(rng.choice(idx, size=need, replace=True))
    if not extra:
        return train
    return train.subset(np.concatenate([np.arange(train.n)] + extra))


def _resample_under(train, rng):
    cells = train.cell_index()
    target = np.bincount(cells, minlength=4).min()
    keep = [rng.choice(np.flatnonzero(cells == c), size=target, replace=False)
            for c in range(4)]
    return train.subset(np.sort(np.concatenate(keep)))


def largest_remainder(total: int, proportions) -> np.ndarray:
    """Integer quotas summing to ``total``, proportional to ``proportions``."""
    p = np.asarray(proportions, dtype=float)
    raw = total * p / p.sum()
    base = np.floor(raw).astype(np.int64)
    left = total - base.sum()
    order = np.lexsort((np.arange(p.size), -(raw - base)))
    base[order[:left]] += 1
    return base


def _resample_stratified(train, rng):
    cells = train.cell_index()
    counts = np.bincount(cells, minlength=4)
    quotas = largest_remainder(train.n, counts)
    picks = [rng.choice(np.flatnonzero(cells == c), size=quotas[c], replace=True)
             for c in range(4) if quotas[c] > 0]
    return train.subset(np.concatenate(picks))


def _standardize(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    return np.where(sd > 0, (x - mu) / np.where(sd > 0, sd, 1.0), 0.0)


def kmeans(x: np.ndarray, k: int, rng: np.random.Generator, iters: int = 50) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; returns cluster labels."""
    n = x.shape[0]
    k = min(k, n)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[c:] = centers[0]
            break
        centers[c] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[c]) ** 2).sum(axis=1))
    labels = np.full(n, -1)
    sq = (x ** 2).sum(axis=1)[:, None]
    for _ in range(iters):
        dist = sq - 2.0 * x @ centers.T + (centers ** 2).sum(axis=1)[None, :]
        new = dist.argmin(axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = x[members].mean(axis=0)
    return labels


def _cluster_rebalance(train, rng, k_clusters):
    labels = kmeans(_standardize(train.x), k_clusters, rng)
    extra = []
    for c in np.unique(labels):
        in_c = labels == c
        g0 = np.flatnonzero(in_c & (train.a == 0))
        g1 = np.flatnonzero(in_c & (train.a == 1))
        if g0.size == 0 or g1.size == 0:
            continue  # nothing to duplicate from
        small, big = (g0, g1) if g0.size < g1.size else (g1, g0)
        if small.size < big.size:
            extra.append(rng.choice(small, size=big.size - small.size, replace=True))
    if not extra:
        return train
    return train.subset(np.concatenate([np.arange(train.n)] + extra))


def _ip_weight(train):
    n = train.n
    counts = np.bincount(train.a, minlength=2)
    if (counts == 0).any():
        raise DegenerateGroupError("IPWeight: a protected group is absent from training data")
    factor = n / (2.0 * counts[train.a])
    return train.replace(w=train.w * factor)


def match_pairs(train: Dataset, max_distance: Optional[float] = None):
    """Greedy 1-NN matching without replacement across protected groups.

    Rows of the smaller group (group 0 on a tie) are visited in row order and
    each takes its nearest unused partner. Returns ``(i, j)`` row-index arrays
    with ``a[i] != a[j]``.
    """
    z = _standardize(train.x)
    g0 = np.flatnonzero(train.a == 0)
    g1 = np.flatnonzero(train.a == 1)
    small, big = (g0, g1) if g0.size <= g1.size else (g1, g0)
    limit = np.inf if max_distance is None else max_distance ** 2
    partner = kernels.greedy_match(z[small], z[big], limit)
    ok = partner >= 0
    return small[ok], big[partner[ok]]


def _match(train, max_distance):
    i, j = match_pairs(train, max_distance)
    if i.size == 0:
        raise DegenerateGroupError("Match: no pairs within max_distance")
    return train.subset(np.sort(np.concatenate([i, j])))


def fit_apply(p: Practice, train: Dataset, test: Dataset, seed: int = 0):
    """Fit ``p`` on ``train`` and return the transformed ``(train, test)``."""
    kind = p.kind
    if kind == STANDARD_SCALE:
        return _standard_scale(train, test)
    if kind == MINMAX_SCALE:
        return _minmax_scale(train, test)
    if kind == IP_WEIGHT:
        return _ip_weight(train), test
    _require_cells(train, kind)
    rng = np.random.default_rng(seed)
    if kind == RESAMPLE_OVER:
        return _resample_over(train, rng), test
    if kind == RESAMPLE_UNDER:
        return _resample_under(train, rng), test
    if kind == RESAMPLE_STRATIFIED:
        return _resample_stratified(train, rng), test
    if kind == CLUSTER_REBALANCE:
        return _cluster_rebalance(train, rng, p.params["k_clusters"]), test
    if kind == MATCH:
        return _match(train, p.params.get("max_distance")), test
    raise ValueError(f"unknown practice kind {kind!r}")  # pragma: no cover


def apply_pipeline(pl: Pipeline, train: Dataset, test: Dataset, seed: int = 0):
    """Apply the steps left to right; step ``i`` draws from ``(seed, i)``.

    A failing step re-raises with ``exc.step`` set to its 1-based index.
    """
    for i, step in enumerate(pl, start=1):
        try:
            train, test = fit_apply(step, train, test, derive_seed(seed, i, step.kind))
        except FateError as exc:
            exc.step = i
            exc.args = (f"step {i} ({step.kind}): {exc}",)
            raise
    return train, test
