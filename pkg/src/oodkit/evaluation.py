"""AUROC computation, the benchmark harness, and report emission.

AUROC is the exact Mann-Whitney statistic (average ranks for ties), not a
trapezoidal ROC integration, so a brute-force pairwise count is a usable
oracle. OOD is always the positive class; every scorer in the toolkit
emits larger-is-more-OOD, so no per-method sign flag exists anywhere.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, OodkitError
from .formats import KNOWN_METHODS, DatasetBundle, RunConfig, load_bundle, swap_orientation
from .gaussian import fit_gaussian, mahalanobis_score, rmd_score
from .iforest import fit_iforest, iforest_score
from .knnscores import (
    _derive_seed,
    fit_knn,
    knn_distance_score,
    knn_distpred_score,
    knn_prediction_score,
)
from .predictive import entropy_score, msp_score

REPORT_FORMAT_VERSION = 1

KNN_METHODS = ("knn_distance", "knn_distpred", "knn_prediction")

# spawn keys for per-family seed derivation from the master seed
_KNN_STREAM = 8
_IFOREST_STREAM = 9


def _score_vector(scores: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise DataError(f"{what} score vector is empty")
    if not np.isfinite(arr).all():
        row = int(np.argmax(~np.isfinite(arr)))
        raise DataError(f"{what}: non-finite score at row {row}")
    return arr


def auroc(in_scores: np.ndarray, ood_scores: np.ndarray) -> float:
    """P(random OOD score > random in-dist score), ties counted 0.5.

    Computed from average ranks (Mann-Whitney). Twice the U statistic is
    an exact integer, so complements satisfy a + (1 - a) == 1 exactly.
    """
    in_arr = _score_vector(in_scores, "in-distribution")
    ood_arr = _score_vector(ood_scores, "OOD")
    ranks = rankdata(np.concatenate([in_arr, ood_arr]))
    n_in, n_ood = in_arr.size, ood_arr.size
    # rank sums are multiples of 0.5 well below 2^53, hence exact
    num = int(round(2.0 * float(ranks[n_in:].sum()))) - n_ood * (n_ood + 1)
    total = n_in * n_ood
    if num <= total:
        return num / (2 * total)
    return 1.0 - (2 * total - num) / (2 * total)


@dataclass(frozen=True)
class ReportRow:
    in_dataset: str
    ood_dataset: str
    method: str
    k: int | None
    auroc: float
    n_in: int
    n_ood: int
    seed: int
    wall_time: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[ReportRow, ...]
    format_version: int = REPORT_FORMAT_VERSION

    def __post_init__(self):
        keys = [(r.in_dataset, r.ood_dataset, r.method, r.k) for r in self.rows]
        if len(set(keys)) != len(keys):
            dup = next(k for k in keys if keys.count(k) > 1)
            raise DataError(f"duplicate report row {dup}")
        for row in self.rows:
            if not 0.0 <= row.auroc <= 1.0:
                raise DataError(f"AUROC out of [0, 1] in row {row}")


def _sorted_rows(report: EvalReport) -> list[ReportRow]:
    order = {m: i for i, m in enumerate(KNOWN_METHODS)}
    return sorted(
        report.rows,
        key=lambda r: (r.in_dataset, r.ood_dataset, order[r.method], r.k if r.k is not None else -1),
    )


class _Scorers:
    """Fits each requested model lazily, once per orientation."""

    def __init__(self, bundle: DatasetBundle, master_seed: int):
        self.bundle = bundle
        self.master_seed = master_seed
        self._gaussian = None
        self._iforest = None
        self._knn = None
        self.seeds = {
            "knn": _derive_seed(master_seed, _KNN_STREAM),
            "iforest": _derive_seed(master_seed, _IFOREST_STREAM),
        }

    def gaussian(self):
        if self._gaussian is None:
            self._gaussian = fit_gaussian(
                self.bundle.train_embeddings,
                self.bundle.train_labels,
                self.bundle.n_classes,
            )
        return self._gaussian

    def iforest(self):
        if self._iforest is None:
            self._iforest = fit_iforest(
                self.bundle.train_embeddings, seed=self.seeds["iforest"]
            )
        return self._iforest

    def knn(self, k: int, knn_config):
        if self._knn is None:
            self._knn = fit_knn(
                self.bundle.train_embeddings,
                self.bundle.train_probs,
                k=k,
                mode=knn_config.mode,
                n_trees=knn_config.n_trees,
                leaf_capacity=knn_config.leaf_capacity,
                search_budget=knn_config.search_budget,
                seed=self.seeds["knn"],
            )
        return self._knn.with_k(k)

    def cell_seed(self, method: str) -> int:
        if method in KNN_METHODS:
            return self.seeds["knn"]
        if method == "isolation_forest":
            return self.seeds["iforest"]
        return self.master_seed

    def score(self, method: str, k: int | None, knn_config, test_emb, test_probs) -> np.ndarray:
        if method == "msp":
            return msp_score(test_probs)
        if method == "entropy":
            return entropy_score(test_probs)
        if method == "mahalanobis":
            return mahalanobis_score(self.gaussian(), test_emb)
        if method == "rmd":
            return rmd_score(self.gaussian(), test_emb)
        if method == "isolation_forest":
            return iforest_score(self.iforest(), test_emb)
        model = self.knn(k, knn_config)
        if method == "knn_distance":
            return knn_distance_score(model, test_emb)
        if method == "knn_distpred":
            return knn_distpred_score(model, test_emb, test_probs)
        if method == "knn_prediction":
            return knn_prediction_score(model, test_emb, test_probs)
        raise DataError(f"unknown method {method!r}")


def _run_orientation(config: RunConfig) -> list[ReportRow]:
    bundle_in = load_bundle(config, "in")
    bundle_ood = load_bundle(config, "ood")
    pair = f"{config.in_name} vs {config.ood_name}"
    ordered = [m for m in KNOWN_METHODS if m in config.methods]
    scorers = _Scorers(bundle_in, config.seed)

    rows = []
    for method in ordered:
        ks = config.knn.ks if method in KNN_METHODS else (None,)
        for k in ks:
            start = time.perf_counter()
            try:
                in_scores = scorers.score(
                    method, k, config.knn, bundle_in.test_embeddings, bundle_in.test_probs
                )
                ood_scores = scorers.score(
                    method, k, config.knn, bundle_ood.test_embeddings, bundle_ood.test_probs
                )
                value = auroc(in_scores, ood_scores)
            except OodkitError as exc:
                raise exc.__class__(f"({method}, {pair}): {exc}") from exc
            rows.append(
                ReportRow(
                    in_dataset=config.in_name,
                    ood_dataset=config.ood_name,
                    method=method,
                    k=k,
                    auroc=value,
                    n_in=bundle_in.test_embeddings.shape[0],
                    n_ood=bundle_ood.test_embeddings.shape[0],
                    seed=scorers.cell_seed(method),
                    wall_time=time.perf_counter() - start,
                )
            )
    return rows


def run_benchmark(config: RunConfig) -> EvalReport:
    """Score every (pair, method, K) cell and assemble the report.

    With a reverse block in the configuration the swapped orientation
    runs as well, mirroring the symmetric two-experiment protocol.
    """
    rows = _run_orientation(config)
    reverse = swap_orientation(config)
    if reverse is not None:
        rows.extend(_run_orientation(reverse))
    return EvalReport(rows=tuple(rows))


_REPORT_COLUMNS = ("in_dataset", "ood_dataset", "method", "K", "auroc", "n_in", "n_ood", "seed")


def _row_cells(row: ReportRow) -> list[str]:
    return [
        row.in_dataset,
        row.ood_dataset,
        row.method,
        "" if row.k is None else str(row.k),
        f"{row.auroc:.4f}",
        str(row.n_in),
        str(row.n_ood),
        str(row.seed),
    ]


def emit_report(report: EvalReport, format: str, path: str | Path) -> Path:
    """Write the report deterministically; wall-clock times never appear.

    Rows are ordered by pair, then canonical method order, then K
    ascending; AUROC is printed to 4 decimals. Rendering the same report
    twice yields identical bytes.
    """
    if not report.rows:
        raise DataError("cannot emit an empty report")
    path = Path(path)
    rows = _sorted_rows(report)
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_REPORT_COLUMNS)
            for row in rows:
                writer.writerow(_row_cells(row))
    elif format == "markdown":
        lines = [
            "| " + " | ".join(_REPORT_COLUMNS) + " |",
            "|" + "---|" * len(_REPORT_COLUMNS),
        ]
        for row in rows:
            cells = _row_cells(row)
            cells[3] = cells[3] or "-"
            lines.append("| " + " | ".join(cells) + " |")
        path.write_text("\n".join(lines) + "\n")
    elif format == "json":
        payload = {
            "format_version": report.format_version,
            "rows": [
                {
                    "in_dataset": row.in_dataset,
                    "ood_dataset": row.ood_dataset,
                    "method": row.method,
                    "k": row.k,
                    "auroc": float(f"{row.auroc:.4f}"),
                    "n_in": row.n_in,
                    "n_ood": row.n_ood,
                    "seed": row.seed,
                }
                for row in rows
            ],
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown report format {format!r}")
    return path


def emit_timings(report: EvalReport, path: str | Path) -> Path:
    """Wall-clock sidecar; intentionally separate from the report files."""
    path = Path(path)
    rows = [
        {
            "in_dataset": row.in_dataset,
            "ood_dataset": row.ood_dataset,
            "method": row.method,
            "k": row.k,
            "wall_time": row.wall_time,
        }
        for row in _sorted_rows(report)
    ]
    path.write_text(json.dumps({"cells": rows}, indent=2, sort_keys=True) + "\n")
    return path
