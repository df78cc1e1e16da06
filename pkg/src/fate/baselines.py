"""Pre-processing bias mitigation baselines: Reweighing, FairSMOTE and the
Disparate Impact Remover."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DegenerateGroupError


@dataclass(frozen=True)
class RepairLevel:
    value: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("repair level must lie in [0, 1]")


@dataclass(frozen=True)
class SmoteParams:
    k_neighbors: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


def _cells(ds: Dataset):
    return ds.cell_index()


def reweighing(train: Dataset) -> Dataset:
    """Weight every (a, y) cell by ``n_a * n_y / (n * n_ay)``.

    Under the new weights the protected attribute and the label are
    independent and the weights sum to ``n``.
    """
    n = train.n
    counts = np.bincount(_cells(train), minlength=4).reshape(2, 2)  # [y, a]
    if (counts == 0).any():
        raise DegenerateGroupError("reweighing needs every (a, y) cell non-empty")
    n_y = counts.sum(axis=1)
    n_a = counts.sum(axis=0)
    table = np.outer(n_y, n_a) / (n * counts)
    return train.replace(w=table[train.y, train.a])


def _knn_within(x: np.ndarray, k: int, chunk: int = 2048) -> np.ndarray:
    """Indices of the ``k`` nearest other rows (exact Euclidean), nearest first."""
    n = x.shape[0]
    k = min(k, n - 1)
    sq = (x ** 2).sum(axis=1)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq[start:stop, None] - 2.0 * x[start:stop] @ x.T + sq[None, :]
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        part = np.argpartition(d2, k - 1, axis=1)[:, :k] if k < n - 1 else \
            np.argsort(d2, axis=1)[:, :k]
        rows = np.arange(stop - start)[:, None]
        order = np.lexsort((part, d2[rows, part]), axis=1)
        out[start:stop] = part[rows, order]
    return out


def fair_smote(train: Dataset, p: SmoteParams = SmoteParams(), return_parents=False):
    """Grow every (a, y) cell to the largest cell size with SMOTE samples.

    A synthetic row sits on the segment between a random cell member and one
    of its ``k`` nearest same-cell neighbours: numeric features are
    interpolated with one shared ``u ~ U(0, 1)``, each one-hot group is copied
    whole from either parent. Original rows come first, unchanged.

    With ``return_parents=True`` also returns an ``(m, 2)`` array of parent
    row indices, one row per synthetic sample.
    """
    cells = _cells(train)
    counts = np.bincount(cells, minlength=4)
    if (counts < 2).any():
        raise DegenerateGroupError("FairSMOTE needs at least two rows in every (a, y) cell")
    rng = np.random.default_rng(p.seed)
    target = counts.max()
    num = train.numeric_mask
    groups = train.onehot_groups()
    new_x, new_y, new_a, parents = [], [], [], []
    for c in range(4):
        need = target - counts[c]
        if need == 0:
            continue
        idx = np.flatnonzero(cells == c)
        nbrs = _knn_within(train.x[idx], p.k_neighbors)
        base = rng.integers(idx.size, size=need)
        pick = nbrs[base, rng.integers(nbrs.shape[1], size=need)]
        u = rng.random(need)
        i, j = idx[base], idx[pick]
        xi, xj = train.x[i], train.x[j]
        synth = xi.copy()
        synth[:, num] = xi[:, num] + u[:, None] * (xj[:, num] - xi[:, num])
        for cols in groups:
            from_j = rng.random(need) < 0.5
            synth[np.ix_(from_j, cols)] = xj[np.ix_(from_j, cols)]
        new_x.append(synth)
        new_y.append(np.full(need, c // 2))
        new_a.append(np.full(need, c % 2))
        parents.append(np.column_stack([i, j]))
    if not new_x:
        out = train
        parents = np.empty((0, 2), dtype=np.int64)
    else:
        m = sum(len(v) for v in new_y)
        out = Dataset(np.vstack([train.x] + new_x),
                      np.concatenate([train.y] + new_y),
                      np.concatenate([train.a] + new_a),
                      np.concatenate([train.w, np.ones(m)]),
                      train.feature_names, train.feature_sources)
        parents = np.vstack(parents)
    return (out, parents) if return_parents else out


def _group_ranks(sorted_vals: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Lowest rank of each value within a sorted group (ties share a rank)."""
    r = np.searchsorted(sorted_vals, values, side="left")
    return np.clip(r, 0, sorted_vals.size - 1)


def _quantile(r, size):
    return r / (size - 1) if size > 1 else np.full(np.shape(r), 0.5)


def _lookup(sorted_vals, q):
    pos = np.rint(q * (sorted_vals.size - 1)).astype(np.int64)
    return sorted_vals[pos]


def disparate_impact_remover(train: Dataset, test: Dataset, r: RepairLevel = RepairLevel()):
    """Rank-preserving repair of numeric features toward a common distribution.

    Per feature and group the training quantile function is fitted; the
    target distribution's quantile at ``q`` is the median of the group
    quantiles at ``q``. A value at within-group quantile ``q`` becomes
    ``(1 - lam) * value + lam * target(q)``. Training rows take their ordinal
    within-group rank (ties broken by row order), so full repair of equal-size
    groups yields identical value sets. Test rows use the training maps,
    located by the lowest matching rank.
    """
    lam = r.value if isinstance(r, RepairLevel) else RepairLevel(float(r)).value
    if not (train.a == 0).any() or not (train.a == 1).any():
        raise DegenerateGroupError("disparate impact remover needs both groups in train")
    xtr, xte = train.x.copy(), test.x.copy()
    groups = [np.flatnonzero(train.a == g) for g in (0, 1)]
    for j in np.flatnonzero(train.numeric_mask):
        sorted_by_group = [np.sort(train.x[rows, j]) for rows in groups]

        def target(q):
            return np.median([_lookup(s, q) for s in sorted_by_group], axis=0)

        # training rows: ordinal rank within the group (ties broken by row order)
        for rows, s in zip(groups, sorted_by_group):
            vals = train.x[rows, j]
            ranks = np.empty(rows.size, dtype=np.int64)
            ranks[np.argsort(vals, kind="stable")] = np.arange(rows.size)
            xtr[rows, j] = (1.0 - lam) * vals + lam * target(_quantile(ranks, s.size))
        # test rows: nearest rank in the training group
        for g, s in enumerate(sorted_by_group):
            rows = np.flatnonzero(test.a == g)
            if rows.size == 0:
                continue
            vals = test.x[rows, j]
            q = _quantile(_group_ranks(s, vals), s.size)
            xte[rows, j] = (1.0 - lam) * vals + lam * target(q)
    return train.replace(x=xtr), test.replace(x=xte)


NAMES = ("fairsmote", "reweighing", "dir")


def apply_baseline(name: str, train: Dataset, test: Dataset, params: dict = None, seed=0):
    """Dispatch by CLI name; returns the prepared ``(train, test)``."""
    params = params or {}
    if name == "reweighing":
        return reweighing(train), test
    if name == "fairsmote":
        return fair_smote(train, SmoteParams(int(params.get("k_neighbors", 5)), seed)), test
    if name == "dir":
        return disparate_impact_remover(train, test, RepairLevel(float(params.get("repair_level", 1.0))))
    raise ValueError(f"unknown baseline {name!r}; expected one of {NAMES}")
