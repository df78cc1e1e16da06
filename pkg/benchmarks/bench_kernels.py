"""Compare the compiled and numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on identical inputs under every available backend; outputs
are checked for bit-identity before timings are reported.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from fate import kernels


def _cases(rng):
    n, d = 4000, 12
    x = rng.normal(size=n)
    y = (rng.random(n) < 0.4).astype(float)
    w = rng.random(n) + 0.5

    # a random complete tree of depth 8 over d features
    depth = 8
    n_nodes = 2 ** (depth + 1) - 1
    internal = 2 ** depth - 1
    feature = np.full(n_nodes, -1, dtype=np.int64)
    feature[:internal] = rng.integers(d, size=internal)
    threshold = np.zeros(n_nodes)
    threshold[:internal] = rng.normal(size=internal)
    left = np.full(n_nodes, -1, dtype=np.int64)
    right = np.full(n_nodes, -1, dtype=np.int64)
    left[:internal] = 2 * np.arange(internal) + 1
    right[:internal] = 2 * np.arange(internal) + 2
    X = rng.normal(size=(20000, d))

    A = rng.normal(size=(600, d))
    B = rng.normal(size=(900, d))
    return {
        "best_split (n=4000)": lambda impl: kernels.best_split(x, y, w, impl=impl),
        "tree_apply (20000 rows, depth 8)":
            lambda impl: kernels.tree_apply(X, feature, threshold, left, right, impl=impl),
        "greedy_match (600 x 900)": lambda impl: kernels.greedy_match(A, B, impl=impl),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)

    impls = kernels.backends()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(impls)}")
    results = []
    for name, fn in _cases(np.random.default_rng(0)).items():
        outputs = {b: fn(impl) for b, impl in impls.items()}
        ref = outputs["python"]
        identical = all(_same(ref, o) for o in outputs.values())
        row = {"kernel": name, "identical": identical}
        for b, impl in impls.items():
            t = timeit.Timer(lambda: fn(impl))
            loops, _ = t.autorange()
            best = min(t.repeat(args.repeat, loops)) / loops
            row[f"{b}_ms"] = best * 1e3
        if "cython" in impls:
            row["speedup"] = row["python_ms"] / row["cython_ms"]
        results.append(row)
        cols = "  ".join(f"{b}={row[f'{b}_ms']:.3f} ms" for b in impls)
        extra = f"  speedup={row['speedup']:.1f}x" if "speedup" in row else ""
        print(f"{name:<34} {cols}{extra}  identical={identical}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0 if all(r["identical"] for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
