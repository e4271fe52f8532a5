"""Command-line interface: fit, score, eval, benchmark, synth.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Model directories hold a model.json describing the method plus
the binary payloads the method family needs; `score` reads the method
back from there, so the caller never repeats it.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, DataError, NumericalError, OodkitError
from .evaluation import (
    _IFOREST_STREAM,
    _KNN_STREAM,
    auroc,
    emit_report,
    emit_timings,
    run_benchmark,
)
from .formats import (
    KNOWN_METHODS,
    load_bundle,
    parse_run_config,
    read_matrix,
    read_scores,
    write_scores,
)
from .gaussian import GaussianModel, fit_gaussian, mahalanobis_score, rmd_score
from .iforest import IsolationForestModel, fit_iforest, iforest_score
from .knnscores import (
    KnnIndexModel,
    _derive_seed,
    fit_knn,
    knn_distance_score,
    knn_distpred_score,
    knn_prediction_score,
)
from .predictive import PredictiveModel
from .synth import SynthConfig, write_synth_bundle

_MODEL_JSON = "model.json"


def _merge_model_json(model_dir: Path, extra: dict) -> None:
    # knn models write their own model.json; extend it rather than clobber
    path = model_dir / _MODEL_JSON
    meta = json.loads(path.read_text()) if path.exists() else {}
    meta.update(extra)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _cmd_fit(args: argparse.Namespace) -> int:
    config = parse_run_config(args.config)
    method = args.method
    # narrow the config so only this method's inputs are required
    config = replace(config, methods=(method,))
    bundle = load_bundle(config, "in")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if method in ("msp", "entropy"):
        if bundle.n_classes is None:
            raise ConfigError(
                "predictive methods need train_probs or train_labels to record n_classes"
            )
        _merge_model_json(
            out,
            {"method_family": "predictive", "method": method, "n_classes": bundle.n_classes},
        )
    elif method in ("mahalanobis", "rmd"):
        model = fit_gaussian(bundle.train_embeddings, bundle.train_labels, bundle.n_classes)
        model.save(out / "model.oodg")
        _merge_model_json(out, {"method_family": "gaussian", "method": method})
    elif method == "isolation_forest":
        model = fit_iforest(
            bundle.train_embeddings, seed=_derive_seed(config.seed, _IFOREST_STREAM)
        )
        model.save(out / "model.oodf")
        _merge_model_json(out, {"method_family": "iforest", "method": method})
    else:
        knn = config.knn
        model = fit_knn(
            bundle.train_embeddings,
            bundle.train_probs,
            k=knn.ks[0],
            mode=knn.mode,
            n_trees=knn.n_trees,
            leaf_capacity=knn.leaf_capacity,
            search_budget=knn.search_budget,
            seed=_derive_seed(config.seed, _KNN_STREAM),
        )
        model.save(out)
        _merge_model_json(out, {"method": method})
    print(f"fitted {method} -> {out}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    model_dir = Path(args.model)
    try:
        meta = json.loads((model_dir / _MODEL_JSON).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{model_dir}: not a model directory (missing {_MODEL_JSON})") from None
    method = meta.get("method")
    if method not in KNOWN_METHODS:
        raise ConfigError(f"{model_dir}: model.json has unknown method {method!r}")

    if method in ("msp", "entropy"):
        # predictive scorers consume probabilities; accept them via either flag
        probs = read_matrix(args.test_probs or args.test, "probabilities")
        model = PredictiveModel(meta["n_classes"])
        scores = model.msp(probs) if method == "msp" else model.entropy(probs)
    elif method in ("mahalanobis", "rmd"):
        emb = read_matrix(args.test, "embeddings")
        model = GaussianModel.load(model_dir / "model.oodg")
        scorer = mahalanobis_score if method == "mahalanobis" else rmd_score
        scores = scorer(model, emb)
    elif method == "isolation_forest":
        emb = read_matrix(args.test, "embeddings")
        scores = iforest_score(IsolationForestModel.load(model_dir / "model.oodf"), emb)
    else:
        emb = read_matrix(args.test, "embeddings")
        model = KnnIndexModel.load(model_dir)
        if method == "knn_distance":
            scores = knn_distance_score(model, emb)
        else:
            if args.test_probs is None:
                raise ConfigError(f"method {method!r} requires --test-probs")
            probs = read_matrix(args.test_probs, "probabilities")
            scorer = knn_distpred_score if method == "knn_distpred" else knn_prediction_score
            scores = scorer(model, emb, probs)
    write_scores(args.out, scores)
    print(f"scored {scores.shape[0]} rows with {method} -> {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    in_scores = read_scores(args.in_scores)
    ood_scores = read_scores(args.ood_scores)
    print(f"{auroc(in_scores, ood_scores):.4f}")
    return 0


def _cmd_benchmark(args: argparse.Namespace) -> int:
    config = parse_run_config(args.config)
    out = Path(args.out) if args.out else config.output_dir
    report = run_benchmark(config)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(report, "csv", out / "report.csv")
    emit_report(report, "markdown", out / "report.md")
    emit_report(report, "json", out / "report.json")
    emit_timings(report, out / "timings.json")
    sys.stdout.write((out / "report.md").read_text())
    print(f"wrote report.csv report.md report.json timings.json -> {out}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        n_train=args.n_train,
        n_test=args.n_test,
        n_ood=args.n_ood,
        dim=args.dim,
        displacement=args.displacement,
        mode=args.mode,
        seed=args.seed,
    )
    run_path = write_synth_bundle(args.out, config)
    print(f"wrote synthetic bundle -> {run_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodkit",
        description="OOD scoring toolkit: fit models, score test sets, report AUROC.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit one method's model from a run configuration")
    fit.add_argument("--config", required=True, help="run configuration JSON")
    fit.add_argument("--method", required=True, choices=KNOWN_METHODS)
    fit.add_argument("--out", required=True, help="model directory to create")
    fit.set_defaults(func=_cmd_fit)

    score = sub.add_parser("score", help="score a test matrix with a fitted model")
    score.add_argument("--model", required=True, help="model directory from `fit`")
    score.add_argument("--test", required=True, help="test matrix (.oodm)")
    score.add_argument(
        "--test-probs", help="test probabilities (.oodm); required by prob-based methods"
    )
    score.add_argument("--out", required=True, help="output score vector (.oodm)")
    score.set_defaults(func=_cmd_score)

    ev = sub.add_parser("eval", help="print AUROC for two score files")
    ev.add_argument("--in-scores", required=True, help="in-distribution scores (.oodm)")
    ev.add_argument("--ood-scores", required=True, help="OOD scores (.oodm)")
    ev.set_defaults(func=_cmd_eval)

    bench = sub.add_parser("benchmark", help="run the full benchmark for a run configuration")
    bench.add_argument("--config", required=True, help="run configuration JSON")
    bench.add_argument("--out", help="report directory (default: config output_dir)")
    bench.set_defaults(func=_cmd_benchmark)

    synth = sub.add_parser("synth", help="generate the synthetic acceptance bundle")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="bundle directory to create")
    synth.add_argument("--mode", choices=("far", "boundary"), default="far")
    synth.add_argument(
        "--displacement",
        type=float,
        help="OOD displacement in pooled standard deviations (default per mode)",
    )
    synth.add_argument("--n-train", type=int, default=SynthConfig.n_train)
    synth.add_argument("--n-test", type=int, default=SynthConfig.n_test)
    synth.add_argument("--n-ood", type=int, default=SynthConfig.n_ood)
    synth.add_argument("--dim", type=int, default=SynthConfig.dim)
    synth.set_defaults(func=_cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OodkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
