# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; exact drop-ins for the `_py` reference versions.

Only integer bookkeeping and float comparisons happen here; every
floating-point value is computed by the caller and passed in, so outputs
are bit-identical to the pure-Python fallback by construction. The heap
mirrors heapq's ordering: keys are (neg_priority, seq) with a unique seq,
which makes the pop order total and implementation-independent.
"""

import numpy as np

from libc.math cimport INFINITY


cdef inline void _heap_push(
    double[::1] hp, long long[::1] hs, long long[::1] hn,
    Py_ssize_t size, double p, long long s, long long n,
) noexcept nogil:
    cdef Py_ssize_t pos = size
    cdef Py_ssize_t parent
    while pos > 0:
        parent = (pos - 1) >> 1
        # stop once the parent key (neg_p, seq) is not greater
        if hp[parent] < p or (hp[parent] == p and hs[parent] < s):
            break
        hp[pos] = hp[parent]
        hs[pos] = hs[parent]
        hn[pos] = hn[parent]
        pos = parent
    hp[pos] = p
    hs[pos] = s
    hn[pos] = n


cdef inline void _heap_pop(
    double[::1] hp, long long[::1] hs, long long[::1] hn, Py_ssize_t size,
) noexcept nogil:
    # move the last entry to the root and sift it down; caller reads the
    # root before calling and decrements size afterwards
    cdef double p = hp[size - 1]
    cdef long long s = hs[size - 1]
    cdef long long n = hn[size - 1]
    cdef Py_ssize_t pos = 0
    cdef Py_ssize_t child
    cdef Py_ssize_t end = size - 1
    while True:
        child = 2 * pos + 1
        if child >= end:
            break
        if child + 1 < end and (
            hp[child + 1] < hp[child]
            or (hp[child + 1] == hp[child] and hs[child + 1] < hs[child])
        ):
            child += 1
        if hp[child] < p or (hp[child] == p and hs[child] < s):
            hp[pos] = hp[child]
            hs[pos] = hs[child]
            hn[pos] = hn[child]
            pos = child
        else:
            break
    hp[pos] = p
    hs[pos] = s
    hn[pos] = n


def forest_gather(
    tree_roots,
    child_left,
    child_right,
    margins,
    leaf_start,
    leaf_count,
    leaf_items,
    budget,
    n_train,
):
    """Best-first traversal of all trees through one shared priority queue.

    Same contract as the reference implementation: expand internal nodes
    until `budget` expansions have happened and `budget` distinct
    candidates are collected (or the queue drains); candidates come back
    in first-seen order.
    """
    cdef const long long[::1] roots = np.ascontiguousarray(tree_roots, dtype=np.int64)
    cdef const long long[::1] cl = np.ascontiguousarray(child_left, dtype=np.int64)
    cdef const long long[::1] cr = np.ascontiguousarray(child_right, dtype=np.int64)
    cdef const double[::1] mg = np.ascontiguousarray(margins, dtype=np.float64)
    cdef const long long[::1] ls = np.ascontiguousarray(leaf_start, dtype=np.int64)
    cdef const long long[::1] lc = np.ascontiguousarray(leaf_count, dtype=np.int64)
    cdef const long long[::1] li = np.ascontiguousarray(leaf_items, dtype=np.int64)
    cdef long long budget_c = budget
    cdef long long n_train_c = n_train

    # every node enters the heap at most once (trees), so node count
    # plus the roots bounds the live heap size
    cdef Py_ssize_t cap = cl.shape[0] + roots.shape[0] + 1
    heap_p = np.empty(cap, dtype=np.float64)
    heap_s = np.empty(cap, dtype=np.int64)
    heap_n = np.empty(cap, dtype=np.int64)
    cdef double[::1] hp = heap_p
    cdef long long[::1] hs = heap_s
    cdef long long[::1] hn = heap_n

    seen_arr = np.zeros(n_train_c, dtype=np.uint8)
    out_arr = np.empty(n_train_c, dtype=np.int64)
    cdef unsigned char[::1] seen = seen_arr
    cdef long long[::1] out = out_arr

    cdef Py_ssize_t size = 0
    cdef long long seq = 0
    cdef long long expansions = 0
    cdef long long out_len = 0
    cdef long long node, left, item, start, cnt, j
    cdef double neg_p, p, m, lo

    with nogil:
        for j in range(roots.shape[0]):
            _heap_push(hp, hs, hn, size, -INFINITY, seq, roots[j])
            size += 1
            seq += 1
        while size > 0 and (expansions < budget_c or out_len < budget_c):
            neg_p = hp[0]
            node = hn[0]
            _heap_pop(hp, hs, hn, size)
            size -= 1
            left = cl[node]
            if left < 0:
                start = ls[node]
                cnt = lc[node]
                for j in range(start, start + cnt):
                    item = li[j]
                    if seen[item] == 0:
                        seen[item] = 1
                        out[out_len] = item
                        out_len += 1
            else:
                expansions += 1
                p = -neg_p
                m = mg[node]
                # Python's min(): second argument wins only when strictly smaller
                lo = -m if -m < p else p
                _heap_push(hp, hs, hn, size, -lo, seq, left)
                size += 1
                seq += 1
                lo = m if m < p else p
                _heap_push(hp, hs, hn, size, -lo, seq, cr[node])
                size += 1
                seq += 1
    return out_arr[:out_len].copy()


def iforest_paths(
    tree_roots,
    feature,
    threshold,
    child_left,
    child_right,
    leaf_adjust,
    x,
):
    """Sum of per-tree path lengths for every row of `x`.

    Accumulation order matches the reference kernel: per row, each tree
    contributes (depth + leaf adjustment) in tree order.
    """
    cdef const long long[::1] roots = np.ascontiguousarray(tree_roots, dtype=np.int64)
    cdef const long long[::1] ft = np.ascontiguousarray(feature, dtype=np.int64)
    cdef const double[::1] th = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const long long[::1] cl = np.ascontiguousarray(child_left, dtype=np.int64)
    cdef const long long[::1] cr = np.ascontiguousarray(child_right, dtype=np.int64)
    cdef const double[::1] la = np.ascontiguousarray(leaf_adjust, dtype=np.float64)
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)

    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t n_roots = roots.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, t
    cdef long long node
    cdef double depth, total

    with nogil:
        for i in range(n):
            total = 0.0
            for t in range(n_roots):
                node = roots[t]
                depth = 0.0
                while cl[node] >= 0:
                    if xv[i, ft[node]] < th[node]:
                        node = cl[node]
                    else:
                        node = cr[node]
                    depth += 1.0
                total += depth + la[node]
            out[i] = total
    return out_arr
