"""Pure-Python reference kernels.

These mirror the compiled kernels in `_fast` exactly: given identical
inputs they must produce identical outputs, element for element. Anything
sensitive to floating-point evaluation order (margins, distances, score
math) is computed outside the kernels and passed in, so the two
implementations only diverge in speed.
"""

from __future__ import annotations

import heapq
import math

import numpy as np


def forest_gather(
    tree_roots: np.ndarray,
    child_left: np.ndarray,
    child_right: np.ndarray,
    margins: np.ndarray,
    leaf_start: np.ndarray,
    leaf_count: np.ndarray,
    leaf_items: np.ndarray,
    budget: int,
    n_train: int,
) -> np.ndarray:
    """Best-first traversal of all trees through one shared priority queue.

    Nodes are keyed by the minimum margin distance along their path (roots
    at +inf). The search runs until it has expanded `budget` internal
    nodes and collected `budget` distinct candidates, or the queue is
    exhausted; a budget of n_train therefore always degenerates to the
    full candidate set. Returns candidates in first-seen order.
    """
    heap: list[tuple[float, int, int]] = []
    seq = 0
    for root in tree_roots:
        # unique seq makes every key distinct, so pop order is total
        heapq.heappush(heap, (-math.inf, seq, int(root)))
        seq += 1
    seen = np.zeros(n_train, dtype=np.bool_)
    out: list[int] = []
    expansions = 0
    while heap and (expansions < budget or len(out) < budget):
        neg_p, _, node = heapq.heappop(heap)
        left = int(child_left[node])
        if left < 0:
            start = int(leaf_start[node])
            for item in leaf_items[start : start + int(leaf_count[node])]:
                if not seen[item]:
                    seen[item] = True
                    out.append(int(item))
        else:
            expansions += 1
            p = -neg_p
            m = float(margins[node])
            heapq.heappush(heap, (-min(p, -m), seq, left))
            seq += 1
            heapq.heappush(heap, (-min(p, m), seq, int(child_right[node])))
            seq += 1
    return np.asarray(out, dtype=np.int64)


def iforest_paths(
    tree_roots: np.ndarray,
    feature: np.ndarray,
    threshold: np.ndarray,
    child_left: np.ndarray,
    child_right: np.ndarray,
    leaf_adjust: np.ndarray,
    x: np.ndarray,
) -> np.ndarray:
    """Sum of per-tree path lengths for every row of `x`.

    Path length = edges walked to the reached leaf plus that leaf's
    c(size) adjustment. The caller divides by the tree count.
    """
    n = x.shape[0]
    total = np.zeros(n, dtype=np.float64)
    for root in tree_roots:
        node = np.full(n, int(root), dtype=np.int64)
        depth = np.zeros(n, dtype=np.float64)
        active = child_left[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = x[idx, feature[cur]] < threshold[cur]
            node[idx] = np.where(go_left, child_left[cur], child_right[cur])
            depth[idx] += 1.0
            active[idx] = child_left[node[idx]] >= 0
        total += depth + leaf_adjust[node]
    return total
