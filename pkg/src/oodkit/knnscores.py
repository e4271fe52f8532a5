"""KNN-based OOD scorers: KNN Distance, KNN DistPred, KNN Prediction.

All three share one fitted model holding the training embeddings (and,
for the probability-aware variants, the training probability rows) plus
the search settings. Neighbor search runs either brute force or against
the random-projection forest; scores are float64 with the toolkit-wide
larger-is-more-OOD orientation.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .formats import read_matrix, validate_matrix, write_matrix
from .knncore import (
    DEFAULT_LEAF_CAPACITY,
    DEFAULT_N_TREES,
    RpForestIndex,
    _select_k,
    _unit_query,
    build_index,
    normalize_rows,
)

CROSS_ENTROPY_CLAMP = 1e-12

_MODEL_FILE = "model.json"


class KnnIndexModel:
    """Fitted state shared by the three KNN scorers.

    Unit-normalized copies of the training data and any forest indexes
    are built lazily and cached; `with_k` shares those caches across a
    K-sweep so the forest is only built once per space.
    """

    def __init__(
        self,
        train_embeddings: np.ndarray,
        train_probs: np.ndarray | None,
        k: int,
        mode: str,
        n_trees: int,
        leaf_capacity: int,
        search_budget: int | None,
        seed: int,
    ):
        self.train_embeddings = train_embeddings
        self.train_probs = train_probs
        self.k = k
        self.mode = mode
        self.n_trees = n_trees
        self.leaf_capacity = leaf_capacity
        self.search_budget = search_budget
        self.seed = seed
        self._cache: dict[str, object] = {}

    @property
    def n_train(self) -> int:
        return self.train_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.train_embeddings.shape[1]

    def with_k(self, k: int) -> "KnnIndexModel":
        """Same fitted data and indexes under a different K."""
        if not 1 <= k <= self.n_train:
            raise DataError(f"K exceeds training size ({k} > {self.n_train})")
        clone = KnnIndexModel(
            self.train_embeddings,
            self.train_probs,
            k,
            self.mode,
            self.n_trees,
            self.leaf_capacity,
            self.search_budget,
            self.seed,
        )
        clone._cache = self._cache
        return clone

    def budget(self) -> int:
        return self.search_budget if self.search_budget is not None else self.n_trees * self.k * 10

    # -- lazy per-space state ------------------------------------------------

    def _train_unit(self, space: str) -> np.ndarray:
        key = f"unit_{space}"
        if key not in self._cache:
            self._cache[key] = normalize_rows(self._train_raw(space))
        return self._cache[key]

    def _train_raw(self, space: str) -> np.ndarray:
        if space == "embedding":
            return self.train_embeddings
        return np.concatenate([self.train_embeddings, self.train_probs], axis=1)

    def _index(self, space: str) -> RpForestIndex:
        key = f"index_{space}"
        if key not in self._cache:
            # concat index gets its own derived seed so the two forests differ
            seed = self.seed if space == "embedding" else _derive_seed(self.seed, 1)
            self._cache[key] = build_index(
                self._train_raw(space),
                n_trees=self.n_trees,
                leaf_capacity=self.leaf_capacity,
                seed=seed,
            )
        return self._cache[key]

    def _attach_index(self, space: str, index: RpForestIndex) -> None:
        self._cache[f"index_{space}"] = index

    # -- neighbor search -----------------------------------------------------

    def _neighbors(self, space: str, test_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        norms = np.einsum("ij,ij->i", test_rows, test_rows)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise DataError(f"zero-norm test embedding at row {int(zero[0])}")
        if self.mode == "approximate":
            return self._index(space).query_batch(test_rows, self.k, self.budget())
        # normalize per row exactly like the index query path, so a full
        # search budget reproduces these results bit for bit
        train_unit = self._train_unit(space)
        n_test = test_rows.shape[0]
        indices = np.empty((n_test, self.k), dtype=np.int64)
        distances = np.empty((n_test, self.k), dtype=np.float64)
        for i in range(n_test):
            d = 1.0 - train_unit @ _unit_query(test_rows[i], train_unit.shape[1])
            np.clip(d, 0.0, 2.0, out=d)
            sel = _select_k(d, self.k)
            indices[i] = sel
            distances[i] = d[sel]
        return indices, distances

    def embedding_neighbors(self, test_emb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        test_emb = validate_matrix(test_emb, "embeddings")
        if test_emb.shape[1] != self.dim:
            raise DataError(
                f"dimension mismatch: test d={test_emb.shape[1]}, train d={self.dim}"
            )
        return self._neighbors("embedding", np.asarray(test_emb, dtype=np.float64))

    def concat_neighbors(
        self, test_emb: np.ndarray, test_probs: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        test_emb, test_probs = self._check_prob_inputs(test_emb, test_probs)
        concat = np.concatenate(
            [np.asarray(test_emb, dtype=np.float64), np.asarray(test_probs, dtype=np.float64)],
            axis=1,
        )
        return self._neighbors("concat", concat)

    def _check_prob_inputs(
        self, test_emb: np.ndarray, test_probs: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        if self.train_probs is None:
            raise DataError("model holds no train_probs; fit with training probabilities")
        test_emb = validate_matrix(test_emb, "embeddings")
        test_probs = validate_matrix(test_probs, "probabilities")
        if test_emb.shape[1] != self.dim:
            raise DataError(
                f"dimension mismatch: test d={test_emb.shape[1]}, train d={self.dim}"
            )
        if test_probs.shape[0] != test_emb.shape[0]:
            raise DataError(
                f"test probs rows ({test_probs.shape[0]}) != test embedding rows "
                f"({test_emb.shape[0]})"
            )
        if test_probs.shape[1] != self.train_probs.shape[1]:
            raise DataError(
                f"class count mismatch: train has {self.train_probs.shape[1]}, "
                f"test has {test_probs.shape[1]}"
            )
        return test_emb, test_probs

    # -- persistence -----------------------------------------------------------

    def save(self, model_dir: str | Path) -> None:
        model_dir = Path(model_dir)
        model_dir.mkdir(parents=True, exist_ok=True)
        meta = {
            "method_family": "knn",
            "k": self.k,
            "mode": self.mode,
            "n_trees": self.n_trees,
            "leaf_capacity": self.leaf_capacity,
            "search_budget": self.search_budget,
            "seed": self.seed,
            "has_probs": self.train_probs is not None,
        }
        (model_dir / _MODEL_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        write_matrix(model_dir / "train_embeddings.oodm", self.train_embeddings, "embeddings")
        if self.train_probs is not None:
            write_matrix(model_dir / "train_probs.oodm", self.train_probs, "probabilities")
        if self.mode == "approximate":
            self._index("embedding").save(model_dir / "index_embedding.oodi")
            if self.train_probs is not None:
                self._index("concat").save(model_dir / "index_concat.oodi")

    @classmethod
    def load(cls, model_dir: str | Path) -> "KnnIndexModel":
        model_dir = Path(model_dir)
        try:
            meta = json.loads((model_dir / _MODEL_FILE).read_text())
        except FileNotFoundError:
            raise ConfigError(f"{model_dir}: not a model directory (missing model.json)") from None
        if meta.get("method_family") != "knn":
            raise ConfigError(f"{model_dir}: model.json is not a knn model")
        train_emb = read_matrix(model_dir / "train_embeddings.oodm", "embeddings")
        train_probs = None
        if meta["has_probs"]:
            train_probs = read_matrix(model_dir / "train_probs.oodm", "probabilities")
        model = cls(
            train_embeddings=train_emb,
            train_probs=train_probs,
            k=meta["k"],
            mode=meta["mode"],
            n_trees=meta["n_trees"],
            leaf_capacity=meta["leaf_capacity"],
            search_budget=meta["search_budget"],
            seed=meta["seed"],
        )
        if meta["mode"] == "approximate":
            emb_index = model_dir / "index_embedding.oodi"
            if emb_index.exists():
                model._attach_index("embedding", RpForestIndex.load(emb_index))
            concat_index = model_dir / "index_concat.oodi"
            if concat_index.exists():
                model._attach_index("concat", RpForestIndex.load(concat_index))
        return model


def _derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)).generate_state(1)[0])


def fit_knn(
    train_embeddings: np.ndarray,
    train_probs: np.ndarray | None = None,
    k: int = 10,
    mode: str = "exact",
    n_trees: int = DEFAULT_N_TREES,
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
    search_budget: int | None = None,
    seed: int = 0,
) -> KnnIndexModel:
    """Validate inputs and assemble the shared KNN model."""
    train_embeddings = validate_matrix(train_embeddings, "embeddings")
    if train_probs is not None:
        train_probs = validate_matrix(train_probs, "probabilities")
        if train_probs.shape[0] != train_embeddings.shape[0]:
            raise DataError(
                f"train probs rows ({train_probs.shape[0]}) != train embedding rows "
                f"({train_embeddings.shape[0]})"
            )
    if mode not in ("exact", "approximate"):
        raise ConfigError(f"mode must be 'exact' or 'approximate', got {mode!r}")
    if not 1 <= k <= train_embeddings.shape[0]:
        raise DataError(
            f"K exceeds training size ({k} > {train_embeddings.shape[0]})"
            if k > train_embeddings.shape[0]
            else f"K must be >= 1, got {k}"
        )
    if search_budget is not None and search_budget < k:
        raise DataError(f"search_budget must be >= K ({search_budget} < {k})")
    return KnnIndexModel(
        train_embeddings=train_embeddings,
        train_probs=train_probs,
        k=k,
        mode=mode,
        n_trees=n_trees,
        leaf_capacity=leaf_capacity,
        search_budget=search_budget,
        seed=seed,
    )


def knn_distance_score(model: KnnIndexModel, test: np.ndarray) -> np.ndarray:
    """Mean cosine distance to the K nearest training embeddings."""
    _, distances = model.embedding_neighbors(test)
    return distances.mean(axis=1)


def knn_distpred_score(
    model: KnnIndexModel, test_emb: np.ndarray, test_probs: np.ndarray
) -> np.ndarray:
    """KNN Distance in the concatenated [embedding ; probabilities] space.

    The two blocks are concatenated raw, with no rescaling of either side.
    """
    _, distances = model.concat_neighbors(test_emb, test_probs)
    return distances.mean(axis=1)


def knn_prediction_score(
    model: KnnIndexModel, test_emb: np.ndarray, test_probs: np.ndarray
) -> np.ndarray:
    """Cross-entropy against the neighbor-average training probabilities.

    Neighbors come from embedding space; the test row's own probabilities
    weight the log of the neighbor average, clamped at 1e-12.
    """
    test_emb, test_probs = model._check_prob_inputs(test_emb, test_probs)
    indices, _ = model._neighbors("embedding", np.asarray(test_emb, dtype=np.float64))
    neighbor_mean = np.asarray(model.train_probs, dtype=np.float64)[indices].mean(axis=1)
    logs = np.log(np.maximum(neighbor_mean, CROSS_ENTROPY_CLAMP))
    return -(np.asarray(test_probs, dtype=np.float64) * logs).sum(axis=1)
