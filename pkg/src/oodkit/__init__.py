"""oodkit: distance- and density-based out-of-distribution detection.

Scores produced by every method share one orientation: larger means more
out-of-distribution.
"""

from .errors import ConfigError, DataError, NumericalError, OodkitError
from .evaluation import EvalReport, auroc, emit_report, emit_timings, run_benchmark
from .formats import (
    DatasetBundle,
    KnnConfig,
    RunConfig,
    load_bundle,
    parse_run_config,
    read_labels,
    read_matrix,
    read_scores,
    write_labels,
    write_matrix,
    write_scores,
)
from .gaussian import GaussianModel, fit_gaussian, mahalanobis_score, rmd_score
from .iforest import IsolationForestModel, fit_iforest, iforest_score
from .knnscores import (
    KnnIndexModel,
    fit_knn,
    knn_distance_score,
    knn_distpred_score,
    knn_prediction_score,
)
from .predictive import PredictiveModel, entropy_score, msp_score
from .synth import SynthConfig, generate_bundle, write_synth_bundle

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DatasetBundle",
    "EvalReport",
    "GaussianModel",
    "IsolationForestModel",
    "KnnConfig",
    "KnnIndexModel",
    "NumericalError",
    "OodkitError",
    "PredictiveModel",
    "RunConfig",
    "SynthConfig",
    "auroc",
    "emit_report",
    "emit_timings",
    "entropy_score",
    "fit_gaussian",
    "fit_iforest",
    "fit_knn",
    "generate_bundle",
    "iforest_score",
    "knn_distance_score",
    "knn_distpred_score",
    "knn_prediction_score",
    "load_bundle",
    "mahalanobis_score",
    "msp_score",
    "parse_run_config",
    "read_labels",
    "read_matrix",
    "read_scores",
    "rmd_score",
    "run_benchmark",
    "write_labels",
    "write_matrix",
    "write_scores",
    "write_synth_bundle",
    "__version__",
]
