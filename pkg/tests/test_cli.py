"""End-to-end tests for the command-line interface."""

import json

import numpy as np
import pytest

from oodkit.cli import main
from oodkit.evaluation import auroc, run_benchmark
from oodkit.formats import parse_run_config, read_matrix, read_scores
from oodkit.synth import BOUNDARY_DISPLACEMENT

SMALL = ["--n-train", "600", "--n-test", "200", "--n-ood", "200"]


def _synth(tmp_path, *extra):
    out = tmp_path / "bundle"
    assert main(["synth", "--seed", "3", "--out", str(out), *SMALL, *extra]) == 0
    return out / "run.json"


def test_synth_fit_score_eval_round_trip(tmp_path, capsys):
    run_json = _synth(tmp_path)
    model_dir = tmp_path / "model"
    assert main(["fit", "--config", str(run_json), "--method", "mahalanobis",
                 "--out", str(model_dir)]) == 0
    meta = json.loads((model_dir / "model.json").read_text())
    assert meta == {"method_family": "gaussian", "method": "mahalanobis"}

    bundle = run_json.parent
    in_path = tmp_path / "in.oodm"
    ood_path = tmp_path / "ood.oodm"
    for src, dst in ((bundle / "test_in_embeddings.oodm", in_path),
                     (bundle / "test_ood_embeddings.oodm", ood_path)):
        assert main(["score", "--model", str(model_dir), "--test", str(src),
                     "--out", str(dst)]) == 0

    capsys.readouterr()
    assert main(["eval", "--in-scores", str(in_path), "--ood-scores", str(ood_path)]) == 0
    printed = capsys.readouterr().out.strip()
    expected = auroc(read_scores(in_path), read_scores(ood_path))
    assert printed == f"{expected:.4f}"
    assert float(printed) >= 0.99


def test_cli_scores_match_benchmark_cells(tmp_path):
    run_json = _synth(tmp_path)
    config = parse_run_config(run_json)
    report = run_benchmark(config)
    by_method = {row.method: row for row in report.rows}

    bundle = run_json.parent
    for method in ("knn_distance", "isolation_forest"):
        model_dir = tmp_path / f"model_{method}"
        assert main(["fit", "--config", str(run_json), "--method", method,
                     "--out", str(model_dir)]) == 0
        scores = {}
        for split in ("in", "ood"):
            out = tmp_path / f"{method}_{split}.oodm"
            assert main(["score", "--model", str(model_dir),
                         "--test", str(bundle / f"test_{split}_embeddings.oodm"),
                         "--out", str(out)]) == 0
            scores[split] = read_scores(out)
        # fit/score shares the per-family seed derivation with the harness
        assert auroc(scores["in"], scores["ood"]) == by_method[method].auroc


def test_fit_and_score_predictive(tmp_path):
    run_json = _synth(tmp_path, "--mode", "boundary")
    model_dir = tmp_path / "msp"
    assert main(["fit", "--config", str(run_json), "--method", "msp",
                 "--out", str(model_dir)]) == 0
    meta = json.loads((model_dir / "model.json").read_text())
    assert meta["method_family"] == "predictive" and meta["n_classes"] == 3

    probs_path = run_json.parent / "test_in_probs.oodm"
    out = tmp_path / "scores.oodm"
    assert main(["score", "--model", str(model_dir), "--test", str(probs_path),
                 "--out", str(out)]) == 0
    probs = read_matrix(probs_path, "probabilities")
    expected = -probs.max(axis=1).astype(np.float64)
    assert np.array_equal(read_scores(out), expected)


def test_score_requires_probs_for_distpred(tmp_path, capsys):
    run_json = _synth(tmp_path)
    model_dir = tmp_path / "distpred"
    assert main(["fit", "--config", str(run_json), "--method", "knn_distpred",
                 "--out", str(model_dir)]) == 0
    bundle = run_json.parent
    rc = main(["score", "--model", str(model_dir),
               "--test", str(bundle / "test_in_embeddings.oodm"),
               "--out", str(tmp_path / "x.oodm")])
    assert rc == 2
    assert "requires --test-probs" in capsys.readouterr().err

    out = tmp_path / "ok.oodm"
    assert main(["score", "--model", str(model_dir),
                 "--test", str(bundle / "test_in_embeddings.oodm"),
                 "--test-probs", str(bundle / "test_in_probs.oodm"),
                 "--out", str(out)]) == 0
    assert read_scores(out).shape == (200,)


def test_benchmark_outputs_are_deterministic(tmp_path):
    run_json = _synth(tmp_path)
    reports = []
    for name in ("report_a", "report_b"):
        out = tmp_path / name
        assert main(["benchmark", "--config", str(run_json), "--out", str(out)]) == 0
        assert sorted(p.name for p in out.iterdir()) == [
            "report.csv", "report.json", "report.md", "timings.json",
        ]
        reports.append({
            p.name: p.read_bytes() for p in out.iterdir() if p.name != "timings.json"
        })
    assert reports[0] == reports[1]


def test_synth_boundary_defaults(tmp_path):
    run_json = _synth(tmp_path, "--mode", "boundary")
    saved = json.loads((run_json.parent / "synth_config.json").read_text())
    assert saved["mode"] == "boundary"
    assert saved["displacement"] == BOUNDARY_DISPLACEMENT


def test_exit_codes(tmp_path, capsys):
    assert main(["fit", "--config", str(tmp_path / "none.json"), "--method", "msp",
                 "--out", str(tmp_path / "m")]) == 2
    assert "not found" in capsys.readouterr().err

    run_json = _synth(tmp_path)
    # a matrix file is not a score vector: data error
    rc = main(["eval", "--in-scores", str(run_json),
               "--ood-scores", str(run_json)])
    assert rc == 3

    with pytest.raises(SystemExit) as exc:
        main(["score", "--model", "x"])
    assert exc.value.code == 2

    with pytest.raises(SystemExit):
        main(["fit", "--config", "x", "--method", "nonsense", "--out", "y"])
