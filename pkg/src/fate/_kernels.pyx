# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. ``_kernels_py`` holds the numpy twins.

Both sides evaluate floating point expressions in the same order so they
return identical results; tests compare them directly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def best_split(const double[::1] x, const double[::1] y, const double[::1] w):
    """Best weighted-Gini split of one feature whose rows are sorted by ``x``.

    Returns ``(decrease, pos)``: rows ``[:pos]`` go left. ``pos`` is -1 when no
    split separates two distinct values.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, best_pos = -1
    cdef double tot_w = 0.0, tot_p = 0.0
    cdef double wl = 0.0, pl = 0.0, wr, pr, parent, gl, gr, dec
    cdef double best = -INFINITY
    for i in range(n):
        tot_w += w[i]
        tot_p += w[i] * y[i]
    parent = 2.0 * tot_p * (tot_w - tot_p) / tot_w
    for i in range(1, n):
        wl += w[i - 1]
        pl += w[i - 1] * y[i - 1]
        if x[i - 1] < x[i]:
            wr = tot_w - wl
            pr = tot_p - pl
            gl = 2.0 * pl * (wl - pl) / wl
            gr = 2.0 * pr * (wr - pr) / wr
            dec = parent - gl - gr
            if dec > best:
                best = dec
                best_pos = i
    return best, best_pos


def tree_apply(const double[:, ::1] X, const cnp.int64_t[::1] feature,
               const double[::1] threshold, const cnp.int64_t[::1] left,
               const cnp.int64_t[::1] right):
    """Leaf node index reached by every row of ``X``."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t r
    cdef cnp.int64_t node
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        o[r] = node
    return out


def greedy_match(const double[:, ::1] A, const double[:, ::1] B, double max_dist_sq):
    """Match each row of ``A`` in order to its nearest unused row of ``B``.

    Returns an int64 array, ``-1`` where no partner within ``max_dist_sq``
    remains.
    """
    cdef Py_ssize_t na = A.shape[0], nb = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k, best_j
    cdef double acc, diff, best
    out = np.full(na, -1, dtype=np.int64)
    used_arr = np.zeros(nb, dtype=np.uint8)
    cdef cnp.int64_t[::1] o = out
    cdef cnp.uint8_t[::1] used = used_arr
    for i in range(na):
        best = INFINITY
        best_j = -1
        for j in range(nb):
            if used[j]:
                continue
            acc = 0.0
            for k in range(d):
                diff = B[j, k] - A[i, k]
                acc = acc + diff * diff
            if acc < best:
                best = acc
                best_j = j
        if best_j >= 0 and best <= max_dist_sq:
            o[i] = best_j
            used[best_j] = 1
    return out
