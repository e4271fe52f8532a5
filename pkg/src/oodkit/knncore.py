"""Cosine-distance K-nearest-neighbor search over training embeddings.

Two search paths share one distance definition: an exact brute-force scan
and a forest of randomized projection trees with perpendicular-bisector
splits, traversed best-first under a shared priority queue and re-ranked
by true cosine distance. All candidate distances come from unit-normalized
float64 copies of the data, so approximate results with a full search
budget coincide exactly with the brute-force path.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import DataError

INDEX_MAGIC = b"OODI"
INDEX_VERSION = 1
_INDEX_HEADER = struct.Struct("<4sIQIIQQQQ")

DEFAULT_N_TREES = 10
DEFAULT_LEAF_CAPACITY = 32

# retries of the random-pair split before falling back to a balanced cut
_SPLIT_ATTEMPTS = 3
_MIN_SPLIT_NORM = 1e-12


class NeighborList(NamedTuple):
    """K training-row indices with their cosine distances, ascending."""

    indices: np.ndarray
    distances: np.ndarray


def normalize_rows(x: np.ndarray, what: str = "embedding") -> np.ndarray:
    """Return float64 unit-normalized rows; zero-norm rows are an error."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"{what} matrix must be 2-D, got shape {x.shape}")
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataError(f"zero-norm {what} at row {int(zero[0])}")
    return x / norms[:, None]


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b), clamped to [0, 2]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DataError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = math.sqrt(float(a @ a))
    nb = math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        raise DataError("zero-norm vector")
    return min(max(1.0 - float(a @ b) / (na * nb), 0.0), 2.0)


def _select_k(distances: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest distances, ties broken by lower index."""
    n = distances.size
    if k == n:
        sel = np.arange(n)
    else:
        kth = np.partition(distances, k - 1)[k - 1]
        below = np.flatnonzero(distances < kth)
        equal = np.flatnonzero(distances == kth)
        sel = np.concatenate([below, equal[: k - below.size]])
    order = np.lexsort((sel, distances[sel]))
    return sel[order[:k]]


def _unit_query(query: np.ndarray, dim: int) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.size != dim:
        raise DataError(f"query dimension {q.size} does not match index dimension {dim}")
    norm = math.sqrt(float(q @ q))
    if norm == 0.0:
        raise DataError("zero-norm query vector")
    return q / norm


def exact_knn(train: np.ndarray, query: np.ndarray, k: int) -> NeighborList:
    """Brute-force K nearest training rows by cosine distance.

    Ties are broken by lower training-row index. K must not exceed the
    number of training rows; there is no silent clamping.
    """
    train_unit = normalize_rows(train)
    return exact_knn_prenormalized(train_unit, query, k)


def exact_knn_prenormalized(train_unit: np.ndarray, query: np.ndarray, k: int) -> NeighborList:
    """`exact_knn` over rows already unit-normalized to float64."""
    n = train_unit.shape[0]
    if not 1 <= k <= n:
        raise DataError(f"K exceeds training size ({k} > {n})" if k > n else f"K must be >= 1, got {k}")
    uq = _unit_query(query, train_unit.shape[1])
    d = 1.0 - train_unit @ uq
    np.clip(d, 0.0, 2.0, out=d)
    sel = _select_k(d, k)
    return NeighborList(indices=sel.astype(np.int64), distances=d[sel])


class _TreeBuilder:
    """Accumulates one forest's nodes into flat parallel arrays."""

    def __init__(self, dim: int):
        self.dim = dim
        self.child_left: list[int] = []
        self.child_right: list[int] = []
        self.normals: list[np.ndarray] = []
        self.offsets: list[float] = []
        self.leaf_start: list[int] = []
        self.leaf_count: list[int] = []
        self.leaf_items: list[int] = []

    def _new_node(self) -> int:
        self.child_left.append(-1)
        self.child_right.append(-1)
        self.normals.append(np.zeros(self.dim))
        self.offsets.append(0.0)
        self.leaf_start.append(-1)
        self.leaf_count.append(0)
        return len(self.child_left) - 1


def _split_subset(
    unit: np.ndarray, subset: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, float, np.ndarray, np.ndarray] | None:
    """Perpendicular-bisector split of two random points; None if degenerate."""
    for _ in range(_SPLIT_ATTEMPTS):
        pos = rng.choice(subset.size, size=2, replace=False)
        a = unit[subset[pos[0]]]
        b = unit[subset[pos[1]]]
        diff = a - b
        norm = math.sqrt(float(diff @ diff))
        if norm < _MIN_SPLIT_NORM:
            continue
        w = diff / norm
        offset = float(w @ (a + b)) / 2.0
        mask = unit[subset] @ w - offset < 0.0
        n_left = int(mask.sum())
        if 0 < n_left < subset.size:
            return w, offset, subset[mask], subset[~mask]
    return None


def _balanced_split(
    unit: np.ndarray, subset: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, float, np.ndarray, np.ndarray]:
    """Random halving used when bisector splits keep degenerating."""
    perm = rng.permutation(subset.size)
    half = subset.size // 2
    w = np.zeros(unit.shape[1])
    w[0] = 1.0
    offset = float(np.mean(unit[subset, 0]))
    return w, offset, np.sort(subset[perm[:half]]), np.sort(subset[perm[half:]])


def _build_tree(
    unit: np.ndarray,
    leaf_capacity: int,
    depth_cap: int,
    rng: np.random.Generator,
    out: _TreeBuilder,
) -> int:
    def rec(subset: np.ndarray, depth: int) -> int:
        node = out._new_node()
        if subset.size <= leaf_capacity:
            out.leaf_start[node] = len(out.leaf_items)
            out.leaf_count[node] = subset.size
            out.leaf_items.extend(int(i) for i in subset)
            return node
        split = _split_subset(unit, subset, rng) if depth < depth_cap else None
        if split is None:
            split = _balanced_split(unit, subset, rng)
        w, offset, left_subset, right_subset = split
        out.normals[node] = w
        out.offsets[node] = offset
        out.child_left[node] = rec(left_subset, depth + 1)
        out.child_right[node] = rec(right_subset, depth + 1)
        return node

    return rec(np.arange(unit.shape[0], dtype=np.int64), 0)


class RpForestIndex:
    """Immutable random-projection forest over unit-normalized embeddings.

    Construction is deterministic for a fixed (data, parameters, seed)
    triple; per-tree generators are derived from the seed so build order
    cannot affect the result. Queries share nothing mutable.
    """

    def __init__(
        self,
        vectors: np.ndarray,
        tree_roots: np.ndarray,
        child_left: np.ndarray,
        child_right: np.ndarray,
        normals: np.ndarray,
        offsets: np.ndarray,
        leaf_start: np.ndarray,
        leaf_count: np.ndarray,
        leaf_items: np.ndarray,
        n_trees: int,
        leaf_capacity: int,
        seed: int,
    ):
        self.vectors = vectors
        self.tree_roots = tree_roots
        self.child_left = child_left
        self.child_right = child_right
        self.normals = normals
        self.offsets = offsets
        self.leaf_start = leaf_start
        self.leaf_count = leaf_count
        self.leaf_items = leaf_items
        self.n_trees = n_trees
        self.leaf_capacity = leaf_capacity
        self.seed = seed

    @property
    def n_train(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def default_budget(self, k: int) -> int:
        return self.n_trees * k * 10

    def _gather(self, unit_query: np.ndarray, budget: int) -> np.ndarray:
        margins = self.normals @ unit_query - self.offsets
        return _kernels.forest_gather(
            self.tree_roots,
            self.child_left,
            self.child_right,
            margins,
            self.leaf_start,
            self.leaf_count,
            self.leaf_items,
            budget,
            self.n_train,
        )

    def query(self, query: np.ndarray, k: int, search_budget: int | None = None) -> NeighborList:
        """K approximate nearest neighbors, re-ranked by true cosine distance.

        `search_budget` bounds the best-first node expansions and the
        minimum number of distinct candidates gathered before re-ranking;
        a budget of n_train makes the search exhaustive and the result
        identical to `exact_knn`.
        """
        if not 1 <= k <= self.n_train:
            raise DataError(
                f"K exceeds training size ({k} > {self.n_train})"
                if k > self.n_train
                else f"K must be >= 1, got {k}"
            )
        budget = self.default_budget(k) if search_budget is None else search_budget
        if budget < k:
            raise DataError(f"search_budget must be >= K ({budget} < {k})")
        uq = _unit_query(query, self.dim)
        cands = self._gather(uq, budget)
        d = 1.0 - self.vectors[cands] @ uq
        np.clip(d, 0.0, 2.0, out=d)
        order = np.lexsort((cands, d))[:k]
        return NeighborList(indices=cands[order], distances=d[order])

    def query_batch(
        self, queries: np.ndarray, k: int, search_budget: int | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Row-wise `query`; results are independent of any batching."""
        queries = np.asarray(queries, dtype=np.float64)
        indices = np.empty((queries.shape[0], k), dtype=np.int64)
        distances = np.empty((queries.shape[0], k), dtype=np.float64)
        for i in range(queries.shape[0]):
            res = self.query(queries[i], k, search_budget)
            indices[i] = res.indices
            distances[i] = res.distances
        return indices, distances

    def save(self, path: str | Path) -> None:
        """Serialize to the OODI container, byte-for-byte deterministic."""
        header = _INDEX_HEADER.pack(
            INDEX_MAGIC,
            INDEX_VERSION,
            self.seed,
            self.n_trees,
            self.leaf_capacity,
            self.n_train,
            self.dim,
            self.child_left.size,
            self.leaf_items.size,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.tree_roots.astype("<i8").tobytes())
            fh.write(self.child_left.astype("<i8").tobytes())
            fh.write(self.child_right.astype("<i8").tobytes())
            fh.write(self.offsets.astype("<f8").tobytes())
            fh.write(self.leaf_start.astype("<i8").tobytes())
            fh.write(self.leaf_count.astype("<i8").tobytes())
            fh.write(self.normals.astype("<f8").tobytes())
            fh.write(self.leaf_items.astype("<i8").tobytes())
            fh.write(self.vectors.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "RpForestIndex":
        raw = Path(path).read_bytes()
        if len(raw) < _INDEX_HEADER.size:
            raise DataError(f"{path}: file shorter than the index header")
        magic, version, seed, n_trees, leaf_capacity, n_train, dim, n_nodes, n_items = (
            _INDEX_HEADER.unpack_from(raw)
        )
        if magic != INDEX_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if version != INDEX_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        sizes = [
            ("tree_roots", "<i8", n_trees),
            ("child_left", "<i8", n_nodes),
            ("child_right", "<i8", n_nodes),
            ("offsets", "<f8", n_nodes),
            ("leaf_start", "<i8", n_nodes),
            ("leaf_count", "<i8", n_nodes),
            ("normals", "<f8", n_nodes * dim),
            ("leaf_items", "<i8", n_items),
            ("vectors", "<f8", n_train * dim),
        ]
        expected = _INDEX_HEADER.size + sum(8 * count for _, _, count in sizes)
        if len(raw) != expected:
            raise DataError(
                f"{path}: truncated payload (declared {expected} bytes, found {len(raw)})"
            )
        arrays = {}
        pos = _INDEX_HEADER.size
        for name, dtype, count in sizes:
            arrays[name] = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).astype(
                np.dtype(dtype).newbyteorder("="), copy=True
            )
            pos += 8 * count
        return cls(
            vectors=arrays["vectors"].reshape(n_train, dim),
            tree_roots=arrays["tree_roots"],
            child_left=arrays["child_left"],
            child_right=arrays["child_right"],
            normals=arrays["normals"].reshape(n_nodes, dim),
            offsets=arrays["offsets"],
            leaf_start=arrays["leaf_start"],
            leaf_count=arrays["leaf_count"],
            leaf_items=arrays["leaf_items"],
            n_trees=n_trees,
            leaf_capacity=leaf_capacity,
            seed=seed,
        )


def build_index(
    train: np.ndarray,
    n_trees: int = DEFAULT_N_TREES,
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
    seed: int = 0,
) -> RpForestIndex:
    """Build a deterministic random-projection forest over training rows.

    Each tree recursively splits its subset by the perpendicular bisector
    of two uniformly chosen points (on the unit sphere); subsets at or
    under `leaf_capacity` become leaves. Degenerate splits retry a few
    pairs and then fall back to a random balanced cut, which is also
    forced beyond a depth cap so leaves never exceed capacity.
    """
    unit = normalize_rows(train)
    n = unit.shape[0]
    if n < 2:
        raise DataError(f"index needs at least 2 training rows, got {n}")
    if n_trees < 1:
        raise DataError(f"n_trees must be >= 1, got {n_trees}")
    if leaf_capacity < 2:
        raise DataError(f"leaf_capacity must be >= 2, got {leaf_capacity}")
    if not 0 <= seed < 2**64:
        raise DataError(f"seed must fit in 64 bits, got {seed}")
    depth_cap = 8 + 2 * math.ceil(math.log2(n))
    builder = _TreeBuilder(unit.shape[1])
    roots = []
    for tree_id in range(n_trees):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tree_id,)))
        roots.append(_build_tree(unit, leaf_capacity, depth_cap, rng, builder))
    return RpForestIndex(
        vectors=unit,
        tree_roots=np.asarray(roots, dtype=np.int64),
        child_left=np.asarray(builder.child_left, dtype=np.int64),
        child_right=np.asarray(builder.child_right, dtype=np.int64),
        normals=np.ascontiguousarray(np.stack(builder.normals), dtype=np.float64),
        offsets=np.asarray(builder.offsets, dtype=np.float64),
        leaf_start=np.asarray(builder.leaf_start, dtype=np.int64),
        leaf_count=np.asarray(builder.leaf_count, dtype=np.int64),
        leaf_items=np.asarray(builder.leaf_items, dtype=np.int64),
        n_trees=n_trees,
        leaf_capacity=leaf_capacity,
        seed=seed,
    )


def query_index(
    index: RpForestIndex, query: np.ndarray, k: int, search_budget: int | None = None
) -> NeighborList:
    """Functional wrapper around :meth:`RpForestIndex.query`."""
    return index.query(query, k, search_budget)
