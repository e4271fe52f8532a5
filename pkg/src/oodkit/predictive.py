"""OOD scores computed from predicted class probabilities alone.

Both scores follow the toolkit-wide orientation (larger = more OOD), so
the maximum softmax probability is negated at source.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .formats import validate_matrix

ENTROPY_CLAMP = 1e-12


def msp_score(probs: np.ndarray) -> np.ndarray:
    """Negated maximum softmax probability, one score per row.

    Args:
        probs: probability matrix, rows on the simplex.

    Returns:
        Float64 scores in [-1, -1/n_classes].
    """
    probs = validate_matrix(probs, "probabilities")
    return -probs.max(axis=1).astype(np.float64)


def entropy_score(probs: np.ndarray) -> np.ndarray:
    """Predictive entropy in nats, one score per row.

    Entries are clamped at 1e-12 before the log so exported rows that
    contain exact zeros stay finite.
    """
    probs = validate_matrix(probs, "probabilities").astype(np.float64)
    logs = np.log(np.maximum(probs, ENTROPY_CLAMP))
    return -(probs * logs).sum(axis=1)


class PredictiveModel:
    """Stateless scorer over probability rows; carries n_classes for validation."""

    def __init__(self, n_classes: int):
        if n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {n_classes}")
        self.n_classes = int(n_classes)

    def _check(self, probs: np.ndarray) -> np.ndarray:
        probs = validate_matrix(probs, "probabilities")
        if probs.shape[1] != self.n_classes:
            raise DataError(
                f"probability matrix has {probs.shape[1]} classes, model expects "
                f"{self.n_classes}"
            )
        return probs

    def msp(self, probs: np.ndarray) -> np.ndarray:
        return msp_score(self._check(probs))

    def entropy(self, probs: np.ndarray) -> np.ndarray:
        return entropy_score(self._check(probs))
