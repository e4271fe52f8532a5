"""Class-conditional Gaussian OOD scores: Mahalanobis and RMD.

The fit estimates per-class means with one pooled covariance, plus a
background Gaussian (global mean and covariance ignoring labels) for the
relative variant. Covariances are regularized with a scale-aware ridge
and factorized once; all scoring goes through triangular solves against
the stored Cholesky factors, never an explicit inverse.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DataError, NumericalError
from .formats import validate_matrix

GAUSSIAN_MAGIC = b"OODG"
GAUSSIAN_VERSION = 1
_GAUSSIAN_HEADER = struct.Struct("<4sIIQdd")

DEFAULT_RIDGE_SCALE = 1e-6

# floor for the doubling loop when the scale-derived ridge is exactly zero
_RIDGE_FLOOR = 1e-12
_MAX_RIDGE_ATTEMPTS = 64


class GaussianModel:
    """Fitted Gaussian state: means plus Cholesky factors of both covariances."""

    def __init__(
        self,
        class_means: np.ndarray,
        shared_factor: np.ndarray,
        global_mean: np.ndarray,
        global_factor: np.ndarray,
        ridge_shared: float,
        ridge_global: float,
    ):
        self.class_means = class_means
        self.shared_factor = shared_factor
        self.global_mean = global_mean
        self.global_factor = global_factor
        self.ridge_shared = ridge_shared
        self.ridge_global = ridge_global

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]

    @property
    def ridge(self) -> float:
        return self.ridge_shared

    def save(self, path: str | Path) -> None:
        header = _GAUSSIAN_HEADER.pack(
            GAUSSIAN_MAGIC,
            GAUSSIAN_VERSION,
            self.n_classes,
            self.dim,
            self.ridge_shared,
            self.ridge_global,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.class_means.astype("<f8").tobytes())
            fh.write(self.global_mean.astype("<f8").tobytes())
            fh.write(self.shared_factor.astype("<f8").tobytes())
            fh.write(self.global_factor.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "GaussianModel":
        raw = Path(path).read_bytes()
        if len(raw) < _GAUSSIAN_HEADER.size:
            raise DataError(f"{path}: file shorter than the model header")
        magic, version, n_classes, dim, ridge_shared, ridge_global = _GAUSSIAN_HEADER.unpack_from(
            raw
        )
        if magic != GAUSSIAN_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if version != GAUSSIAN_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        counts = [n_classes * dim, dim, dim * dim, dim * dim]
        expected = _GAUSSIAN_HEADER.size + 8 * sum(counts)
        if len(raw) != expected:
            raise DataError(
                f"{path}: truncated payload (declared {expected} bytes, found {len(raw)})"
            )
        pos = _GAUSSIAN_HEADER.size
        parts = []
        for count in counts:
            parts.append(np.frombuffer(raw, dtype="<f8", count=count, offset=pos).copy())
            pos += 8 * count
        return cls(
            class_means=parts[0].reshape(n_classes, dim),
            global_mean=parts[1],
            shared_factor=parts[2].reshape(dim, dim),
            global_factor=parts[3].reshape(dim, dim),
            ridge_shared=ridge_shared,
            ridge_global=ridge_global,
        )


def _ridged_cholesky(cov: np.ndarray, ridge_scale: float, what: str) -> tuple[np.ndarray, float]:
    """Cholesky of cov + lambda*I, doubling lambda until it succeeds."""
    d = cov.shape[0]
    trace = float(np.trace(cov))
    lam = ridge_scale * trace / d
    eye = np.eye(d)
    for _ in range(_MAX_RIDGE_ATTEMPTS):
        try:
            return np.linalg.cholesky(cov + lam * eye), lam
        except np.linalg.LinAlgError:
            lam = max(2.0 * lam, _RIDGE_FLOOR * max(1.0, trace / d))
    raise NumericalError(f"{what} covariance is not positive definite even after ridging")


def _covariance(centered: np.ndarray, n: int) -> np.ndarray:
    return centered.T @ centered / n


def fit_gaussian(
    train: np.ndarray,
    labels: np.ndarray,
    n_classes: int | None = None,
    ridge_scale: float = DEFAULT_RIDGE_SCALE,
) -> GaussianModel:
    """Fit per-class means, pooled covariance, and the background Gaussian.

    Every class in 0..n_classes-1 must have at least two training rows.
    Both covariances are regularized as cov + lambda*I with
    lambda = ridge_scale * trace(cov)/d, doubled until Cholesky succeeds;
    the final lambdas are recorded on the model.
    """
    train = np.asarray(validate_matrix(train, "embeddings"), dtype=np.float64)
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size != train.shape[0]:
        raise DataError(
            f"label count ({labels.size}) != training rows ({train.shape[0]})"
        )
    if not np.issubdtype(labels.dtype, np.integer):
        raise DataError(f"labels must be integers, got dtype {labels.dtype}")
    if (labels < 0).any():
        raise DataError(f"negative label at row {int(np.argmax(labels < 0))}")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    if (labels >= n_classes).any():
        row = int(np.argmax(labels >= n_classes))
        raise DataError(f"label out of range at row {row} ({int(labels[row])} >= {n_classes})")
    counts = np.bincount(labels, minlength=n_classes)
    small = np.flatnonzero(counts < 2)
    if small.size:
        raise DataError(
            f"class {int(small[0])} has {int(counts[small[0]])} example(s); "
            "every class needs at least 2"
        )

    n, d = train.shape
    class_means = np.empty((n_classes, d))
    pooled_centered = np.empty_like(train)
    for k in range(n_classes):
        members = train[labels == k]
        class_means[k] = members.mean(axis=0)
        pooled_centered[labels == k] = members - class_means[k]
    shared_cov = _covariance(pooled_centered, n)

    global_mean = train.mean(axis=0)
    global_cov = _covariance(train - global_mean, n)

    shared_factor, ridge_shared = _ridged_cholesky(shared_cov, ridge_scale, "pooled")
    global_factor, ridge_global = _ridged_cholesky(global_cov, ridge_scale, "global")
    return GaussianModel(
        class_means=class_means,
        shared_factor=shared_factor,
        global_mean=global_mean,
        global_factor=global_factor,
        ridge_shared=ridge_shared,
        ridge_global=ridge_global,
    )


def _squared_md(test: np.ndarray, mean: np.ndarray, factor: np.ndarray) -> np.ndarray:
    """(z-mean)' cov^{-1} (z-mean) per row, via one triangular solve."""
    diff = test - mean
    y = solve_triangular(factor, diff.T, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", y, y)


def _validated_test(model: GaussianModel, test: np.ndarray) -> np.ndarray:
    test = validate_matrix(test, "embeddings")
    if test.shape[1] != model.dim:
        raise DataError(
            f"dimension mismatch: test d={test.shape[1]}, model d={model.dim}"
        )
    return np.asarray(test, dtype=np.float64)


def mahalanobis_score(model: GaussianModel, test: np.ndarray) -> np.ndarray:
    """min over classes of the squared Mahalanobis distance; larger = more OOD."""
    test = _validated_test(model, test)
    best = np.full(test.shape[0], np.inf)
    for k in range(model.n_classes):
        md = _squared_md(test, model.class_means[k], model.shared_factor)
        np.minimum(best, md, out=best)
    return best


def rmd_score(model: GaussianModel, test: np.ndarray) -> np.ndarray:
    """Relative variant: min_k MD_k minus the background MD_0. May be negative."""
    test = _validated_test(model, test)
    best = np.full(test.shape[0], np.inf)
    for k in range(model.n_classes):
        md = _squared_md(test, model.class_means[k], model.shared_factor)
        np.minimum(best, md, out=best)
    background = _squared_md(test, model.global_mean, model.global_factor)
    return best - background
