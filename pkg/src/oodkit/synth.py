"""Synthetic benchmark bundles: a labeled Gaussian mixture plus OOD points.

Three unit-covariance classes sit on a circle inside the first two
coordinates of a higher-dimensional space. OOD points come from the same
mixture displaced by a configurable multiple of the pooled standard
deviation (which is exactly 1 by construction):

* ``far``: each component is pushed tangentially along the circle, so
  the OOD clusters are displaced both angularly (cosine methods) and in
  Mahalanobis distance, while staying inside the class-mean plane where
  the background covariance is wide (RMD).
* ``boundary``: every component collapses onto the circumcenter, which
  lies on all pairwise decision boundaries and is equidistant from all
  class means; posteriors there are ambiguous across classes.

Probability rows are class posteriors of the generating mixture under a
temperature, renormalized onto the simplex before storage.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .formats import write_labels, write_matrix

DEFAULT_N_TRAIN = 5000
DEFAULT_N_TEST = 1000
DEFAULT_N_OOD = 1000
DEFAULT_DIM = 32
N_CLASSES = 3
DEFAULT_DISPLACEMENT = 8.0

# boundary mode needs the circumcenter within reach of the class blobs;
# with a large radius the in-distribution posteriors saturate to one-hot
# and MSP ties entropy instead of trailing it
BOUNDARY_DISPLACEMENT = 2.5

# circle radius for the class means; the boundary mode overrides it so
# the circumcenter sits exactly `displacement` away from every mean
DEFAULT_RADIUS = 40.0

# posterior temperatures: far-mode posteriors are essentially one-hot,
# boundary-mode ones are softened so ambiguity actually shows up
FAR_TEMPERATURE = 1.0
BOUNDARY_TEMPERATURE = 2.0**0.5


@dataclass(frozen=True)
class SynthConfig:
    n_train: int = DEFAULT_N_TRAIN
    n_test: int = DEFAULT_N_TEST
    n_ood: int = DEFAULT_N_OOD
    dim: int = DEFAULT_DIM
    displacement: float | None = None
    mode: str = "far"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("far", "boundary"):
            raise ConfigError(f"synth mode must be 'far' or 'boundary', got {self.mode!r}")
        if self.displacement is None:
            fallback = BOUNDARY_DISPLACEMENT if self.mode == "boundary" else DEFAULT_DISPLACEMENT
            object.__setattr__(self, "displacement", fallback)
        if self.dim < 3:
            raise ConfigError(f"synth dim must be >= 3, got {self.dim}")
        if min(self.n_train, self.n_test, self.n_ood) < N_CLASSES * 2:
            raise ConfigError("synth split sizes must be at least 6")
        if self.displacement <= 0:
            raise ConfigError(f"displacement must be positive, got {self.displacement}")

    @property
    def radius(self) -> float:
        return self.displacement if self.mode == "boundary" else DEFAULT_RADIUS

    @property
    def temperature(self) -> float:
        return BOUNDARY_TEMPERATURE if self.mode == "boundary" else FAR_TEMPERATURE


def class_means(config: SynthConfig) -> np.ndarray:
    """Three means equally spaced on a circle in the first two coordinates."""
    angles = 2.0 * np.pi * np.arange(N_CLASSES) / N_CLASSES
    means = np.zeros((N_CLASSES, config.dim))
    means[:, 0] = config.radius * np.cos(angles)
    means[:, 1] = config.radius * np.sin(angles)
    return means


def ood_centers(config: SynthConfig) -> np.ndarray:
    """Displaced component centers; each is `displacement` from its source mean."""
    means = class_means(config)
    if config.mode == "boundary":
        return np.zeros_like(means)
    angles = 2.0 * np.pi * np.arange(N_CLASSES) / N_CLASSES
    centers = means.copy()
    centers[:, 0] -= config.displacement * np.sin(angles)
    centers[:, 1] += config.displacement * np.cos(angles)
    return centers


def posterior_rows(config: SynthConfig, points: np.ndarray) -> np.ndarray:
    """Tempered class posteriors, renormalized onto the simplex."""
    means = class_means(config)
    d2 = ((points[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    logits = -d2 / (2.0 * config.temperature**2)
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs


def generate_bundle(config: SynthConfig) -> dict[str, np.ndarray]:
    """All arrays of one bundle, keyed like the run-configuration files."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(0,)))
    means = class_means(config)
    centers = ood_centers(config)

    def sample(locations: np.ndarray, n: int):
        labels = rng.integers(0, N_CLASSES, size=n)
        points = locations[labels] + rng.normal(size=(n, config.dim))
        return points, labels.astype(np.uint32)

    train, train_labels = sample(means, config.n_train)
    test_in, _ = sample(means, config.n_test)
    test_ood, _ = sample(centers, config.n_ood)
    return {
        "train_embeddings": train.astype(np.float32),
        "train_probs": posterior_rows(config, train).astype(np.float32),
        "train_labels": train_labels,
        "test_in_embeddings": test_in.astype(np.float32),
        "test_in_probs": posterior_rows(config, test_in).astype(np.float32),
        "test_ood_embeddings": test_ood.astype(np.float32),
        "test_ood_probs": posterior_rows(config, test_ood).astype(np.float32),
    }


def write_synth_bundle(out_dir: str | Path, config: SynthConfig) -> Path:
    """Write the bundle plus a ready-to-run benchmark configuration.

    Returns the path of the generated run.json; file paths inside it are
    relative to the bundle directory.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arrays = generate_bundle(config)
    file_names = {}
    for key, arr in arrays.items():
        if key == "train_labels":
            name = "train_labels.oodl"
            write_labels(out_dir / name, arr)
        else:
            kind = "probabilities" if key.endswith("probs") else "embeddings"
            name = f"{key}.oodm"
            write_matrix(out_dir / name, arr, kind)
        file_names[key] = name

    run_config = {
        **file_names,
        "seed": config.seed,
        "in_name": f"synth_{config.mode}_in",
        "ood_name": f"synth_{config.mode}_ood",
    }
    (out_dir / "run.json").write_text(json.dumps(run_config, indent=2, sort_keys=True) + "\n")
    (out_dir / "synth_config.json").write_text(
        json.dumps(asdict(config), indent=2, sort_keys=True) + "\n"
    )
    return out_dir / "run.json"
