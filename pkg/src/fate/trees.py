"""CART trees for the random-forest and gradient-boosting families."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from ._seeding import derive_seed


@dataclass(frozen=True, eq=False)
class Tree:
    """Array-encoded binary tree; ``feature[i] < 0`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X) -> np.ndarray:
        return kernels.tree_apply(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist()
                for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d) -> "Tree":
        return cls(np.asarray(d["feature"], np.int64), np.asarray(d["threshold"], float),
                   np.asarray(d["left"], np.int64), np.asarray(d["right"], np.int64),
                   np.asarray(d["value"], float))


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []

    def add(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        return len(self.feature) - 1

    def finish(self, value) -> Tree:
        return Tree(np.asarray(self.feature, np.int64), np.asarray(self.threshold, float),
                    np.asarray(self.left, np.int64), np.asarray(self.right, np.int64),
                    np.asarray(value, float))


def _threshold(xs, pos):
    lo, hi = xs[pos - 1], xs[pos]
    thr = lo + (hi - lo) / 2.0
    return thr if lo <= thr < hi else lo


def grow_gini_tree(X, y, w, max_depth, n_features, rng) -> Tree:
    """Grow a classification tree on rows with positive weight ``w``.

    Leaf values are left at zero; callers fill them in.
    """
    d = X.shape[1]
    b = _Builder()
    root = np.flatnonzero(w > 0)
    stack = [(b.add(), root, 0)]
    yf = y.astype(float)
    while stack:
        node, idx, depth = stack.pop()
        ys = yf[idx]
        if depth >= max_depth or idx.size < 2 or ys.min() == ys.max():
            continue
        best = (0.0, -1, 0.0)
        for f in np.sort(rng.choice(d, size=n_features, replace=False)):
            col = X[idx, f]
            order = np.argsort(col, kind="stable")
            xs = col[order]
            dec, pos = kernels.best_split(xs, ys[order], w[idx][order])
            if pos > 0 and dec > best[0]:
                best = (dec, f, _threshold(xs, pos))
        _, f, thr = best
        if f < 0:
            continue
        go_left = X[idx, f] <= thr
        lnode, rnode = b.add(), b.add()
        b.feature[node], b.threshold[node] = int(f), float(thr)
        b.left[node], b.right[node] = lnode, rnode
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))
    return b.finish(np.zeros(len(b.feature)))


def fit_forest(X, y, w, n_trees, max_depth, feature_fraction, seed):
    """Random forest with weight-proportional bootstrap.

    Structure comes from the bootstrap sample; each leaf's value is the
    weighted positive fraction of all training rows routed to it.
    """
    n, d = X.shape
    if feature_fraction == "sqrt":
        m = max(1, int(np.sqrt(d)))
    else:
        m = max(1, min(d, int(round(float(feature_fraction) * d))))
    p = w / w.sum()
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(derive_seed(seed, "tree", t))
        counts = rng.multinomial(n, p).astype(float)
        tree = grow_gini_tree(X, y, counts, max_depth, m, rng)
        leaves = tree.apply(X)
        mass = np.bincount(leaves, weights=w, minlength=tree.n_nodes)
        pos = np.bincount(leaves, weights=w * y, minlength=tree.n_nodes)
        value = np.divide(pos, mass, out=np.zeros_like(pos), where=mass > 0)
        trees.append(Tree(tree.feature, tree.threshold, tree.left, tree.right, value))
    return trees


def grow_regression_tree(X, g, h, w, max_depth) -> Tree:
    """Newton-step tree for boosting: squared-error splits on gradients ``g``,
    leaf values ``sum(w g) / sum(w h)``."""
    b = _Builder()
    stack = [(b.add(), np.arange(X.shape[0]), 0)]
    leaf_rows = {}
    wg = w * g
    while stack:
        node, idx, depth = stack.pop()
        leaf_rows[node] = idx
        if depth >= max_depth or idx.size < 2:
            continue
        best_gain, best_f, best_thr = 1e-12, -1, 0.0
        for f in range(X.shape[1]):
            col = X[idx, f]
            order = np.argsort(col, kind="stable")
            xs = col[order]
            cw = np.cumsum(w[idx][order])
            cs = np.cumsum(wg[idx][order])
            tw, ts = cw[-1], cs[-1]
            valid = xs[:-1] < xs[1:]
            if not valid.any():
                continue
            lw, ls = cw[:-1][valid], cs[:-1][valid]
            gain = ls ** 2 / lw + (ts - ls) ** 2 / (tw - lw) - ts ** 2 / tw
            k = int(np.argmax(gain))
            if gain[k] > best_gain:
                pos = int(np.flatnonzero(valid)[k] + 1)
                best_gain, best_f, best_thr = gain[k], f, _threshold(xs, pos)
        if best_f < 0:
            continue
        go_left = X[idx, best_f] <= best_thr
        lnode, rnode = b.add(), b.add()
        b.feature[node], b.threshold[node] = int(best_f), float(best_thr)
        b.left[node], b.right[node] = lnode, rnode
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))
    value = np.zeros(len(b.feature))
    for node, idx in leaf_rows.items():
        den = (w[idx] * h[idx]).sum()
        value[node] = wg[idx].sum() / max(den, 1e-12)
    return b.finish(value)
