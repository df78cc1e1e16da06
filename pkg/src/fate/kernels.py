"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``FATE_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("FATE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def best_split(x, y, w, impl=None):
    impl = impl or _impl
    return impl.best_split(np.ascontiguousarray(x, dtype=float),
                           np.ascontiguousarray(y, dtype=float),
                           np.ascontiguousarray(w, dtype=float))


def tree_apply(X, feature, threshold, left, right, impl=None):
    impl = impl or _impl
    return impl.tree_apply(np.ascontiguousarray(X, dtype=float),
                           np.ascontiguousarray(feature, dtype=np.int64),
                           np.ascontiguousarray(threshold, dtype=float),
                           np.ascontiguousarray(left, dtype=np.int64),
                           np.ascontiguousarray(right, dtype=np.int64))


def greedy_match(A, B, max_dist_sq=np.inf, impl=None):
    impl = impl or _impl
    return impl.greedy_match(np.ascontiguousarray(A, dtype=float),
                             np.ascontiguousarray(B, dtype=float),
                             float(max_dist_sq))


def backends():
    """Available implementations by name, for tests and benchmarks."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled
        out["cython"] = _compiled
    except ImportError:
        pass
    return out
