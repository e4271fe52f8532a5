"""Throughput comparison: compiled kernels vs the pure-Python fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Both implementations produce bit-identical outputs (enforced by
tests/test_kernels.py); this script only measures speed.
"""

from __future__ import annotations

import time

import numpy as np

from oodkit._kernels import _py

try:
    from oodkit._kernels import _fast
except ImportError:
    _fast = None

from oodkit.iforest import fit_iforest
from oodkit.knncore import build_index


def best_of(fn, repeats=3):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_forest_gather(rng):
    n, d, n_queries = 20_000, 64, 200
    train = rng.normal(size=(n, d))
    index = build_index(train, n_trees=10, leaf_capacity=32, seed=0)
    queries = rng.normal(size=(n_queries, d))
    queries /= np.linalg.norm(queries, axis=1, keepdims=True)
    margin_rows = queries @ index.normals.T - index.offsets
    budget = 10 * 10 * 10  # default budget for n_trees=10, k=10

    def run(impl):
        def go():
            for margins in margin_rows:
                impl.forest_gather(
                    index.tree_roots,
                    index.child_left,
                    index.child_right,
                    margins,
                    index.leaf_start,
                    index.leaf_count,
                    index.leaf_items,
                    budget,
                    index.n_train,
                )
        return go

    return f"forest_gather ({n_queries} queries, n={n}, budget={budget})", run


def bench_iforest_paths(rng):
    n, d, n_test = 20_000, 64, 2_000
    model = fit_iforest(rng.normal(size=(n, d)), seed=0)
    x = np.ascontiguousarray(rng.normal(size=(n_test, d)))

    def run(impl):
        def go():
            impl.iforest_paths(
                model.tree_roots,
                model.feature,
                model.threshold,
                model.child_left,
                model.child_right,
                model.leaf_adjust,
                x,
            )
        return go

    return f"iforest_paths ({n_test} rows, 100 trees)", run


def main():
    rng = np.random.default_rng(0)
    rows = []
    for make in (bench_forest_gather, bench_iforest_paths):
        label, run = make(rng)
        py_time = best_of(run(_py))
        if _fast is None:
            rows.append((label, py_time, None))
        else:
            rows.append((label, py_time, best_of(run(_fast))))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'python':>10}  {'compiled':>10}  {'speedup':>8}")
    for label, py_time, fast_time in rows:
        if fast_time is None:
            print(f"{label:<{width}}  {py_time:>9.3f}s  {'absent':>10}  {'-':>8}")
        else:
            print(
                f"{label:<{width}}  {py_time:>9.3f}s  {fast_time:>9.3f}s  "
                f"{py_time / fast_time:>7.1f}x"
            )


if __name__ == "__main__":
    main()
