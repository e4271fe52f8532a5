"""Binary and CSV I/O for embeddings, probabilities, labels, and scores.

Two container formats, both little-endian:

* matrix files (``.oodm``): magic ``OODM``, version u32, dtype code u8
  (0 = float32, 1 = float64), kind code u8 (0 = embeddings,
  1 = probabilities, 2 = scores), three reserved zero bytes, n_rows u64,
  n_cols u64, then the payload row-major. The 29-byte header is fixed.
* label files (``.oodl``): magic ``OODL``, version u32, n u64, then n
  u32 labels.

CSV is supported as a convenience path for small matrices and labels; the
binary format is canonical. Embeddings and probabilities are stored as
float32, scores as float64 (all score arithmetic in the toolkit is 64-bit).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

MATRIX_MAGIC = b"OODM"
LABEL_MAGIC = b"OODL"
FORMAT_VERSION = 1

DTYPE_CODES = {0: np.float32, 1: np.float64}
DTYPE_FOR_KIND = {"embeddings": 0, "probabilities": 1, "scores": 2}
KIND_CODES = {"embeddings": 0, "probabilities": 1, "scores": 2}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

# magic + version + dtype + kind + 3 reserved + n_rows + n_cols = 29 bytes
_MATRIX_HEADER = struct.Struct("<4sIBB3sQQ")
_LABEL_HEADER = struct.Struct("<4sIQ")

PROB_ROW_SUM_TOL = 1e-4

KNOWN_METHODS = (
    "msp",
    "entropy",
    "mahalanobis",
    "rmd",
    "isolation_forest",
    "knn_distance",
    "knn_distpred",
    "knn_prediction",
)


def _check_finite(data: np.ndarray, what: str) -> None:
    if not np.isfinite(data).all():
        bad = np.argwhere(~np.isfinite(data))
        row, col = (int(bad[0][0]), int(bad[0][1])) if data.ndim == 2 else (int(bad[0][0]), 0)
        raise DataError(f"{what}: non-finite entry at ({row}, {col})")


def validate_matrix(data: np.ndarray, kind: str) -> np.ndarray:
    """Validate a matrix against the invariants of its kind.

    Returns a C-contiguous array in the storage dtype (float32 for
    embeddings/probabilities, float64 for scores). Scores may be passed
    as 1-D vectors and come back as (n, 1).
    """
    if kind not in KIND_CODES:
        raise ValueError(f"unknown matrix kind {kind!r}")
    arr = np.asarray(data)
    if kind == "scores":
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
    else:
        arr = np.ascontiguousarray(arr, dtype=np.float32)
    if arr.ndim != 2:
        raise DataError(f"{kind} matrix must be 2-D, got shape {arr.shape}")
    n_rows, n_cols = arr.shape
    if n_rows < 1 or n_cols < 1:
        raise DataError(f"{kind} matrix must have at least one row and column, got {arr.shape}")
    _check_finite(arr, f"{kind} matrix")
    if kind == "probabilities":
        if n_cols < 2:
            raise DataError(f"probability matrix needs >= 2 classes, got {n_cols}")
        if (arr < 0).any() or (arr > 1).any():
            bad = np.argwhere((arr < 0) | (arr > 1))[0]
            raise DataError(
                f"probability entry outside [0, 1] at ({int(bad[0])}, {int(bad[1])})"
            )
        sums = arr.astype(np.float64).sum(axis=1)
        off = np.abs(sums - 1.0)
        if (off > PROB_ROW_SUM_TOL).any():
            row = int(np.argmax(off))
            raise DataError(
                f"probability row {row} sums to {sums[row]:.6f}, "
                f"outside 1 +/- {PROB_ROW_SUM_TOL}"
            )
    return arr


def write_matrix(path: str | Path, data: np.ndarray, kind: str = "embeddings") -> None:
    """Write a matrix file; byte-for-byte deterministic for given contents.

    ``kind`` is one of ``embeddings``, ``probabilities``, ``scores``.
    Paths ending in ``.csv`` take the CSV convenience route.
    """
    path = Path(path)
    arr = validate_matrix(data, kind)
    if path.suffix.lower() == ".csv":
        _write_matrix_csv(path, arr)
        return
    dtype_code = 1 if kind == "scores" else 0
    header = _MATRIX_HEADER.pack(
        MATRIX_MAGIC,
        FORMAT_VERSION,
        dtype_code,
        KIND_CODES[kind],
        b"\x00\x00\x00",
        arr.shape[0],
        arr.shape[1],
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes(order="C"))


def read_matrix(path: str | Path, kind: str | None = None) -> np.ndarray:
    """Read a matrix file and validate its invariants.

    When ``kind`` is given, the file's kind code must match. Returns
    float32 data for embeddings/probabilities and float64 for scores.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        if kind is None:
            raise ValueError("reading a CSV matrix requires an explicit kind")
        return _read_matrix_csv(path, kind)
    raw = path.read_bytes()
    if len(raw) < _MATRIX_HEADER.size:
        raise DataError(f"{path}: file shorter than the {_MATRIX_HEADER.size}-byte header")
    magic, version, dtype_code, kind_code, reserved, n_rows, n_cols = _MATRIX_HEADER.unpack_from(
        raw
    )
    if magic != MATRIX_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    if dtype_code not in DTYPE_CODES:
        raise DataError(f"{path}: unsupported dtype code {dtype_code}")
    if kind_code not in KIND_NAMES:
        raise DataError(f"{path}: unsupported kind code {kind_code}")
    if reserved != b"\x00\x00\x00":
        raise DataError(f"{path}: reserved header bytes are not zero")
    file_kind = KIND_NAMES[kind_code]
    if kind is not None and file_kind != kind:
        raise DataError(f"{path}: expected a {kind} file, found {file_kind}")
    dtype = np.dtype(DTYPE_CODES[dtype_code]).newbyteorder("<")
    declared = n_rows * n_cols * dtype.itemsize
    payload = raw[_MATRIX_HEADER.size :]
    if len(payload) != declared:
        raise DataError(
            f"{path}: truncated payload (declared {declared} bytes, found {len(payload)})"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(n_rows, n_cols)
    arr = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return validate_matrix(arr, file_kind)


def _write_matrix_csv(path: Path, arr: np.ndarray) -> None:
    # %.17g keeps float64 scores exact; float32 needs only 9 significant digits
    fmt = "%.17g" if arr.dtype == np.float64 else "%.9g"
    rows = "\n".join(",".join(fmt % v for v in row) for row in arr)
    path.write_text(rows + "\n")


def _read_matrix_csv(path: Path, kind: str) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: malformed CSV matrix: {exc}") from None
    return validate_matrix(arr, kind)


def write_scores(path: str | Path, scores: np.ndarray) -> None:
    """Write a score vector as a one-column kind-2 matrix file."""
    write_matrix(path, np.asarray(scores, dtype=np.float64).reshape(-1, 1), kind="scores")


def read_scores(path: str | Path) -> np.ndarray:
    """Read a score file back as a 1-D float64 vector."""
    arr = read_matrix(path, kind="scores")
    if arr.shape[1] != 1:
        raise DataError(f"{path}: score files must have exactly one column, got {arr.shape[1]}")
    return arr.ravel()


def write_scores_csv(path: str | Path, scores: np.ndarray) -> None:
    """CSV mirror of a score file: one `index,score` line per row."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    lines = ["index,score"]
    lines.extend(f"{i},{v!r}" for i, v in enumerate(scores.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def write_labels(path: str | Path, labels: np.ndarray) -> None:
    """Write labels in the binary label format (or CSV for `.csv` paths)."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise DataError(f"labels must be a non-empty vector, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise DataError(f"labels must be integers, got dtype {labels.dtype}")
    if (labels < 0).any():
        raise DataError(f"negative label at row {int(np.argmax(labels < 0))}")
    if (labels > np.iinfo(np.uint32).max).any():
        raise DataError("label exceeds the u32 storage range")
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text("\n".join(str(int(v)) for v in labels) + "\n")
        return
    with open(path, "wb") as fh:
        fh.write(_LABEL_HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, labels.size))
        fh.write(labels.astype("<u4").tobytes())


def read_labels(path: str | Path, n_classes: int) -> np.ndarray:
    """Read a label file (binary or single-column CSV) and range-check it."""
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(LABEL_MAGIC):
        if len(raw) < _LABEL_HEADER.size:
            raise DataError(f"{path}: truncated label header")
        magic, version, n = _LABEL_HEADER.unpack_from(raw)
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        payload = raw[_LABEL_HEADER.size :]
        if len(payload) != 4 * n:
            raise DataError(
                f"{path}: truncated payload (declared {4 * n} bytes, found {len(payload)})"
            )
        labels = np.frombuffer(payload, dtype="<u4").astype(np.int64)
    else:
        text = raw.decode("utf-8", errors="strict")
        fields = [line.strip() for line in text.splitlines() if line.strip()]
        try:
            labels = np.array([int(v) for v in fields], dtype=np.int64)
        except ValueError as exc:
            raise DataError(f"{path}: malformed label CSV: {exc}") from None
    if labels.size == 0:
        raise DataError(f"{path}: empty label file")
    if (labels < 0).any():
        raise DataError(f"{path}: negative label at row {int(np.argmax(labels < 0))}")
    if (labels >= n_classes).any():
        row = int(np.argmax(labels >= n_classes))
        raise DataError(
            f"{path}: label out of range at row {row} "
            f"({int(labels[row])} >= n_classes {n_classes})"
        )
    return labels


@dataclass(frozen=True)
class KnnConfig:
    """KNN search settings from the run configuration."""

    ks: tuple[int, ...] = (10,)
    mode: str = "exact"
    n_trees: int = 10
    leaf_capacity: int = 32
    search_budget: int | None = None  # None -> n_trees * k * 10

    def budget_for(self, k: int) -> int:
        return self.search_budget if self.search_budget is not None else self.n_trees * k * 10


@dataclass(frozen=True)
class RunConfig:
    """Parsed and path-resolved run configuration."""

    train_embeddings: Path
    test_in_embeddings: Path
    test_ood_embeddings: Path
    train_probs: Path | None = None
    train_labels: Path | None = None
    test_in_probs: Path | None = None
    test_ood_probs: Path | None = None
    methods: tuple[str, ...] = KNOWN_METHODS
    knn: KnnConfig = field(default_factory=KnnConfig)
    seed: int = 0
    output_dir: Path = Path("report")
    in_name: str = "in"
    ood_name: str = "ood"
    reverse: "RunConfig | None" = None


_PATH_KEYS = (
    "train_embeddings",
    "train_probs",
    "train_labels",
    "test_in_embeddings",
    "test_in_probs",
    "test_ood_embeddings",
    "test_ood_probs",
)
_TOP_KEYS = set(_PATH_KEYS) | {
    "methods",
    "knn",
    "seed",
    "output_dir",
    "in_name",
    "ood_name",
    "reverse",
}


def _parse_knn(obj: dict) -> KnnConfig:
    known = {"k", "mode", "n_trees", "leaf_capacity", "search_budget"}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown knn config keys: {sorted(unknown)}")
    k = obj.get("k", 10)
    ks = tuple(k) if isinstance(k, (list, tuple)) else (k,)
    if not ks or not all(isinstance(v, int) and v >= 1 for v in ks):
        raise ConfigError(f"knn.k must be a positive integer or list of them, got {k!r}")
    mode = obj.get("mode", "exact")
    if mode not in ("exact", "approximate"):
        raise ConfigError(f"knn.mode must be 'exact' or 'approximate', got {mode!r}")
    n_trees = obj.get("n_trees", 10)
    leaf_capacity = obj.get("leaf_capacity", 32)
    budget = obj.get("search_budget")
    if not isinstance(n_trees, int) or n_trees < 1:
        raise ConfigError(f"knn.n_trees must be a positive integer, got {n_trees!r}")
    if not isinstance(leaf_capacity, int) or leaf_capacity < 2:
        raise ConfigError(f"knn.leaf_capacity must be an integer >= 2, got {leaf_capacity!r}")
    if budget is not None and (not isinstance(budget, int) or budget < 1):
        raise ConfigError(f"knn.search_budget must be a positive integer or null, got {budget!r}")
    return KnnConfig(ks=ks, mode=mode, n_trees=n_trees, leaf_capacity=leaf_capacity, search_budget=budget)


def _parse_config_dict(obj: dict, base_dir: Path, allow_reverse: bool) -> RunConfig:
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    paths: dict[str, Path | None] = {}
    for key in _PATH_KEYS:
        value = obj.get(key)
        if value is None:
            paths[key] = None
        elif isinstance(value, str):
            paths[key] = (base_dir / value).resolve() if not Path(value).is_absolute() else Path(value)
        else:
            raise ConfigError(f"config key {key} must be a path string, got {value!r}")
    for key in ("train_embeddings", "test_in_embeddings", "test_ood_embeddings"):
        if paths[key] is None:
            raise ConfigError(f"config is missing required key {key}")
    methods = obj.get("methods", list(KNOWN_METHODS))
    if not isinstance(methods, list) or not methods:
        raise ConfigError("config key 'methods' must be a non-empty list")
    bad = [m for m in methods if m not in KNOWN_METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; known: {list(KNOWN_METHODS)}")
    seed = obj.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"config key 'seed' must be an integer, got {seed!r}")
    out = obj.get("output_dir", "report")
    output_dir = (base_dir / out).resolve() if not Path(out).is_absolute() else Path(out)
    reverse = None
    if obj.get("reverse") is not None:
        if not allow_reverse:
            raise ConfigError("nested 'reverse' sections are not allowed")
        if not isinstance(obj["reverse"], dict):
            raise ConfigError("config key 'reverse' must be an object")
        rev = dict(obj["reverse"])
        rev.setdefault("methods", methods)
        rev.setdefault("knn", obj.get("knn", {}))
        rev.setdefault("seed", seed)
        rev.setdefault("output_dir", out)
        # swapped orientation: the forward in-distribution test set is the OOD set
        rev.setdefault("test_ood_embeddings", str(paths["test_in_embeddings"]))
        if paths["test_in_probs"] is not None:
            rev.setdefault("test_ood_probs", str(paths["test_in_probs"]))
        rev.setdefault("in_name", obj.get("ood_name", "ood"))
        rev.setdefault("ood_name", obj.get("in_name", "in"))
        reverse = _parse_config_dict(rev, base_dir, allow_reverse=False)
    return RunConfig(
        train_embeddings=paths["train_embeddings"],
        train_probs=paths["train_probs"],
        train_labels=paths["train_labels"],
        test_in_embeddings=paths["test_in_embeddings"],
        test_in_probs=paths["test_in_probs"],
        test_ood_embeddings=paths["test_ood_embeddings"],
        test_ood_probs=paths["test_ood_probs"],
        methods=tuple(methods),
        knn=_parse_knn(obj.get("knn", {})),
        seed=seed,
        output_dir=output_dir,
        in_name=str(obj.get("in_name", "in")),
        ood_name=str(obj.get("ood_name", "ood")),
        reverse=reverse,
    )


def parse_run_config(source: str | Path | dict) -> RunConfig:
    """Parse a run configuration from a JSON file or an equivalent dict.

    Relative paths are resolved against the config file's directory (or the
    current directory when given a dict).
    """
    if isinstance(source, dict):
        return _parse_config_dict(source, Path.cwd(), allow_reverse=True)
    path = Path(source)
    try:
        obj = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config root must be a JSON object")
    return _parse_config_dict(obj, path.parent, allow_reverse=True)


_METHOD_NEEDS = {
    "msp": ("test_probs",),
    "entropy": ("test_probs",),
    "mahalanobis": ("train_labels",),
    "rmd": ("train_labels",),
    "isolation_forest": (),
    "knn_distance": (),
    "knn_distpred": ("train_probs", "test_probs"),
    "knn_prediction": ("train_probs", "test_probs"),
}


@dataclass(frozen=True)
class DatasetBundle:
    """A train split plus one test split scored against it."""

    train_embeddings: np.ndarray
    test_embeddings: np.ndarray
    train_probs: np.ndarray | None = None
    train_labels: np.ndarray | None = None
    test_probs: np.ndarray | None = None
    test_name: str = "test"

    @property
    def dim(self) -> int:
        return self.train_embeddings.shape[1]

    @property
    def n_classes(self) -> int | None:
        if self.train_probs is not None:
            return self.train_probs.shape[1]
        if self.test_probs is not None:
            return self.test_probs.shape[1]
        if self.train_labels is not None:
            return int(self.train_labels.max()) + 1
        return None


def _require_file(config: RunConfig, attr: str, method: str) -> Path:
    value = getattr(config, attr)
    if value is None:
        raise ConfigError(f"method {method!r} requires config key {attr} (method requires labels)"
                          if attr == "train_labels"
                          else f"method {method!r} requires config key {attr}")
    return value


def load_bundle(config: RunConfig, split: str = "in") -> DatasetBundle:
    """Load one orientation's data with cross-file consistency checks.

    ``split`` selects which test matrices to load (``in`` or ``ood``);
    the train split is shared. Missing files required by any configured
    method raise :class:`ConfigError` before any scoring starts.
    """
    if split not in ("in", "ood"):
        raise ValueError(f"split must be 'in' or 'ood', got {split!r}")
    emb_key = f"test_{split}_embeddings"
    probs_key = f"test_{split}_probs"

    needs = {need for m in config.methods for need in _METHOD_NEEDS[m]}
    if "train_probs" in needs:
        _require_file(config, "train_probs", "knn_distpred/knn_prediction")
    if "test_probs" in needs:
        for method in config.methods:
            if "test_probs" in _METHOD_NEEDS[method] and getattr(config, probs_key) is None:
                raise ConfigError(f"method {method!r} requires config key {probs_key}")
    if "train_labels" in needs and config.train_labels is None:
        method = next(m for m in config.methods if "train_labels" in _METHOD_NEEDS[m])
        raise ConfigError(f"method {method!r} requires labels (config key train_labels)")

    def _read(path: Path | None, kind: str) -> np.ndarray | None:
        if path is None:
            return None
        if not path.exists():
            raise ConfigError(f"config references missing file: {path}")
        return read_matrix(path, kind=kind)

    train_emb = _read(config.train_embeddings, "embeddings")
    test_emb = _read(getattr(config, emb_key), "embeddings")
    train_probs = _read(config.train_probs, "probabilities")
    test_probs = _read(getattr(config, probs_key), "probabilities")

    if train_emb.shape[1] != test_emb.shape[1]:
        raise DataError(
            f"embedding dimension mismatch: train d={train_emb.shape[1]}, "
            f"{split} test d={test_emb.shape[1]}"
        )
    n_classes = None
    if train_probs is not None:
        if train_probs.shape[0] != train_emb.shape[0]:
            raise DataError(
                f"train probs rows ({train_probs.shape[0]}) != train embeddings rows "
                f"({train_emb.shape[0]})"
            )
        n_classes = train_probs.shape[1]
    if test_probs is not None:
        if test_probs.shape[0] != test_emb.shape[0]:
            raise DataError(
                f"{split} test probs rows ({test_probs.shape[0]}) != embeddings rows "
                f"({test_emb.shape[0]})"
            )
        if n_classes is not None and test_probs.shape[1] != n_classes:
            raise DataError(
                f"class count mismatch: train probs have {n_classes} classes, "
                f"{split} test probs have {test_probs.shape[1]}"
            )
        n_classes = n_classes or test_probs.shape[1]

    train_labels = None
    if config.train_labels is not None:
        if not config.train_labels.exists():
            raise ConfigError(f"config references missing file: {config.train_labels}")
        train_labels = read_labels(config.train_labels, n_classes or np.iinfo(np.int64).max)
        if train_labels.size != train_emb.shape[0]:
            raise DataError(
                f"label count ({train_labels.size}) != train embeddings rows "
                f"({train_emb.shape[0]})"
            )

    return DatasetBundle(
        train_embeddings=train_emb,
        test_embeddings=test_emb,
        train_probs=train_probs,
        train_labels=train_labels,
        test_probs=test_probs,
        test_name=config.in_name if split == "in" else config.ood_name,
    )


def swap_orientation(config: RunConfig) -> RunConfig | None:
    """Return the reverse-orientation config, if one was given."""
    if config.reverse is None:
        return None
    return replace(config.reverse, reverse=None)
