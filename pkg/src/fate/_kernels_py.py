"""numpy fallbacks for the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def best_split(x, y, w):
    n = x.shape[0]
    if n < 2:
        return -np.inf, -1
    cw = np.cumsum(w)
    cp = np.cumsum(w * y)
    tot_w = cw[-1]
    tot_p = cp[-1]
    parent = 2.0 * tot_p * (tot_w - tot_p) / tot_w
    wl = cw[:-1]
    pl = cp[:-1]
    valid = x[:-1] < x[1:]
    if not valid.any():
        return -np.inf, -1
    wl = wl[valid]
    pl = pl[valid]
    wr = tot_w - wl
    pr = tot_p - pl
    gl = 2.0 * pl * (wl - pl) / wl
    gr = 2.0 * pr * (wr - pr) / wr
    dec = parent - gl - gr
    k = int(np.argmax(dec))
    return float(dec[k]), int(np.flatnonzero(valid)[k] + 1)


def tree_apply(X, feature, threshold, left, right):
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = np.flatnonzero(feature[node] >= 0)
    while active.size:
        nd = node[active]
        f = feature[nd]
        go_left = X[active, f] <= threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = active[feature[node[active]] >= 0]
    return node


def greedy_match(A, B, max_dist_sq):
    na, d = A.shape
    out = np.full(na, -1, dtype=np.int64)
    used = np.zeros(B.shape[0], dtype=bool)
    for i in range(na):
        acc = np.zeros(B.shape[0])
        for k in range(d):
            diff = B[:, k] - A[i, k]
            acc = acc + diff * diff
        acc[used] = np.inf
        if acc.size == 0:
            continue
        j = int(np.argmin(acc))
        if np.isfinite(acc[j]) and acc[j] <= max_dist_sq:
            out[i] = j
            used[j] = True
    return out
