"""Isolation Forest anomaly scorer over embeddings.

Trees are grown on small uniform subsamples with axis-aligned random
splits, so anomalies isolate close to the root. Scoring walks every tree
through the kernel backend, averages the path lengths, and normalizes by
c(psi), the expected path length of an unsuccessful BST search; short
paths map to scores near 1.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DataError
from .formats import validate_matrix

IFOREST_MAGIC = b"OODF"
IFOREST_VERSION = 1
# magic, version, seed, n_trees, psi, dim, n_nodes
_IFOREST_HEADER = struct.Struct("<4sIQIIQQ")

DEFAULT_N_TREES = 100
DEFAULT_PSI = 256
EULER_GAMMA = 0.5772156649

# the open interval (min, max) can be empty in floats; give up after this
_THRESHOLD_DRAWS = 64


def average_path_length(m: int) -> float:
    """c(m): expected path length of an unsuccessful BST search over m points."""
    if m <= 1:
        return 0.0
    if m == 2:
        return 1.0
    return 2.0 * (math.log(m - 1.0) + EULER_GAMMA) - 2.0 * (m - 1.0) / m


class _TreeBuilder:
    """Accumulates every tree of the forest into flat parallel arrays."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.child_left: list[int] = []
        self.child_right: list[int] = []
        self.leaf_adjust: list[float] = []

    def new_node(self) -> int:
        self.feature.append(0)
        self.threshold.append(0.0)
        self.child_left.append(-1)
        self.child_right.append(-1)
        self.leaf_adjust.append(0.0)
        return len(self.feature) - 1


def _build_tree(
    builder: _TreeBuilder,
    data: np.ndarray,
    rows: np.ndarray,
    depth: int,
    height_limit: int,
    rng: np.random.Generator,
) -> int:
    node = builder.new_node()
    if depth < height_limit and rows.size > 1:
        sub = data[rows]
        mins = sub.min(axis=0)
        maxs = sub.max(axis=0)
        spread = np.flatnonzero(maxs > mins)
        if spread.size:
            dim = int(spread[rng.integers(spread.size)])
            lo = float(mins[dim])
            hi = float(maxs[dim])
            for _ in range(_THRESHOLD_DRAWS):
                t = float(rng.uniform(lo, hi))
                if lo < t < hi:
                    mask = sub[:, dim] < t
                    builder.feature[node] = dim
                    builder.threshold[node] = t
                    builder.child_left[node] = _build_tree(
                        builder, data, rows[mask], depth + 1, height_limit, rng
                    )
                    builder.child_right[node] = _build_tree(
                        builder, data, rows[~mask], depth + 1, height_limit, rng
                    )
                    return node
    builder.leaf_adjust[node] = average_path_length(rows.size)
    return node


class IsolationForestModel:
    """Fitted forest stored as flat arrays shared by all trees."""

    def __init__(
        self,
        tree_roots: np.ndarray,
        feature: np.ndarray,
        threshold: np.ndarray,
        child_left: np.ndarray,
        child_right: np.ndarray,
        leaf_adjust: np.ndarray,
        psi: int,
        dim: int,
        seed: int,
    ):
        self.tree_roots = tree_roots
        self.feature = feature
        self.threshold = threshold
        self.child_left = child_left
        self.child_right = child_right
        self.leaf_adjust = leaf_adjust
        self.psi = psi
        self.dim = dim
        self.seed = seed

    @property
    def n_trees(self) -> int:
        return self.tree_roots.shape[0]

    @property
    def height_limit(self) -> int:
        return math.ceil(math.log2(self.psi))

    @property
    def c_psi(self) -> float:
        return average_path_length(self.psi)

    def save(self, path: str | Path) -> None:
        header = _IFOREST_HEADER.pack(
            IFOREST_MAGIC,
            IFOREST_VERSION,
            self.seed,
            self.n_trees,
            self.psi,
            self.dim,
            self.feature.shape[0],
        )
        with open(path, "wb") as fh:
            fh.write(header)
            for arr, dtype in self._array_layout():
                fh.write(arr.astype(dtype).tobytes())

    def _array_layout(self):
        return [
            (self.tree_roots, "<i8"),
            (self.feature, "<i8"),
            (self.child_left, "<i8"),
            (self.child_right, "<i8"),
            (self.threshold, "<f8"),
            (self.leaf_adjust, "<f8"),
        ]

    @classmethod
    def load(cls, path: str | Path) -> "IsolationForestModel":
        raw = Path(path).read_bytes()
        if len(raw) < _IFOREST_HEADER.size:
            raise DataError(f"{path}: file shorter than the forest header")
        magic, version, seed, n_trees, psi, dim, n_nodes = _IFOREST_HEADER.unpack_from(raw)
        if magic != IFOREST_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if version != IFOREST_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        counts = [n_trees] + [n_nodes] * 5
        expected = _IFOREST_HEADER.size + 8 * sum(counts)
        if len(raw) != expected:
            raise DataError(
                f"{path}: truncated payload (declared {expected} bytes, found {len(raw)})"
            )
        dtypes = ["<i8"] * 4 + ["<f8"] * 2
        pos = _IFOREST_HEADER.size
        parts = []
        for count, dtype in zip(counts, dtypes):
            parts.append(np.frombuffer(raw, dtype=dtype, count=count, offset=pos).copy())
            pos += 8 * count
        return cls(
            tree_roots=parts[0],
            feature=parts[1],
            child_left=parts[2],
            child_right=parts[3],
            threshold=parts[4],
            leaf_adjust=parts[5],
            psi=psi,
            dim=dim,
            seed=seed,
        )


def fit_iforest(
    train: np.ndarray,
    n_trees: int = DEFAULT_N_TREES,
    psi: int | None = None,
    seed: int = 0,
) -> IsolationForestModel:
    """Grow `n_trees` isolation trees on uniform subsamples of `psi` rows.

    Each node splits a uniformly chosen dimension with spread in the
    node's subset at a threshold drawn strictly inside (min, max); growth
    stops at ceil(log2 psi) depth or subset size 1. Fully deterministic
    given the seed. `psi` defaults to min(256, n_train).
    """
    train = validate_matrix(train, "embeddings")
    n = train.shape[0]
    if n < 2:
        raise DataError(f"isolation forest needs at least 2 training rows, got {n}")
    if psi is None:
        psi = min(DEFAULT_PSI, n)
    if not 2 <= psi <= n:
        raise DataError(f"psi must be in [2, {n}], got {psi}")
    if n_trees < 1:
        raise DataError(f"n_trees must be >= 1, got {n_trees}")
    if not 0 <= seed < 2**64:
        raise DataError(f"seed must be a 64-bit unsigned integer, got {seed}")

    data = np.ascontiguousarray(train, dtype=np.float64)
    height_limit = math.ceil(math.log2(psi))
    builder = _TreeBuilder()
    roots = []
    for tree_id in range(n_trees):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tree_id,)))
        rows = rng.choice(n, size=psi, replace=False)
        roots.append(_build_tree(builder, data, rows, 0, height_limit, rng))
    return IsolationForestModel(
        tree_roots=np.asarray(roots, dtype=np.int64),
        feature=np.asarray(builder.feature, dtype=np.int64),
        threshold=np.asarray(builder.threshold, dtype=np.float64),
        child_left=np.asarray(builder.child_left, dtype=np.int64),
        child_right=np.asarray(builder.child_right, dtype=np.int64),
        leaf_adjust=np.asarray(builder.leaf_adjust, dtype=np.float64),
        psi=psi,
        dim=train.shape[1],
        seed=seed,
    )


def iforest_score(model: IsolationForestModel, test: np.ndarray) -> np.ndarray:
    """2^(-E[h]/c(psi)) per row, in (0, 1]; larger = more OOD."""
    test = validate_matrix(test, "embeddings")
    if test.shape[1] != model.dim:
        raise DataError(
            f"dimension mismatch: test d={test.shape[1]}, model d={model.dim}"
        )
    x = np.ascontiguousarray(test, dtype=np.float64)
    totals = _kernels.iforest_paths(
        model.tree_roots,
        model.feature,
        model.threshold,
        model.child_left,
        model.child_right,
        model.leaf_adjust,
        x,
    )
    avg = totals / model.n_trees
    return np.exp2(-avg / model.c_psi)
