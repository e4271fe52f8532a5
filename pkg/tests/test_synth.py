"""Tests for the synthetic benchmark generator."""

import json

import numpy as np
import pytest

from oodkit.errors import ConfigError
from oodkit.evaluation import auroc, run_benchmark
from oodkit.formats import load_bundle, parse_run_config, read_labels, read_matrix
from oodkit.knnscores import fit_knn, knn_distance_score
from oodkit.predictive import entropy_score
from oodkit.synth import (
    BOUNDARY_DISPLACEMENT,
    DEFAULT_DISPLACEMENT,
    DEFAULT_RADIUS,
    N_CLASSES,
    SynthConfig,
    class_means,
    generate_bundle,
    ood_centers,
    posterior_rows,
    write_synth_bundle,
)

SMALL = dict(n_train=600, n_test=200, n_ood=200)


def test_bundle_shapes_and_dtypes():
    config = SynthConfig(**SMALL, dim=16, seed=3)
    bundle = generate_bundle(config)
    assert set(bundle) == {
        "train_embeddings",
        "train_probs",
        "train_labels",
        "test_in_embeddings",
        "test_in_probs",
        "test_ood_embeddings",
        "test_ood_probs",
    }
    assert bundle["train_embeddings"].shape == (600, 16)
    assert bundle["test_in_embeddings"].shape == (200, 16)
    assert bundle["test_ood_embeddings"].shape == (200, 16)
    for key, arr in bundle.items():
        if key == "train_labels":
            assert arr.dtype == np.uint32
            assert arr.shape == (600,)
            assert arr.min() >= 0 and arr.max() < N_CLASSES
        else:
            assert arr.dtype == np.float32
    for key in ("train_probs", "test_in_probs", "test_ood_probs"):
        probs = bundle[key]
        assert probs.shape[1] == N_CLASSES
        assert probs.min() >= 0.0
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_determinism_and_seed_sensitivity():
    a = generate_bundle(SynthConfig(**SMALL, seed=7))
    b = generate_bundle(SynthConfig(**SMALL, seed=7))
    for key in a:
        assert np.array_equal(a[key], b[key])
    c = generate_bundle(SynthConfig(**SMALL, seed=8))
    assert not np.array_equal(a["train_embeddings"], c["train_embeddings"])


def test_far_centers_are_tangential_displacements():
    config = SynthConfig(seed=0)
    means = class_means(config)
    centers = ood_centers(config)
    assert np.allclose(np.linalg.norm(means[:, :2], axis=1), DEFAULT_RADIUS)
    assert np.array_equal(means[:, 2:], np.zeros_like(means[:, 2:]))
    offsets = centers - means
    np.testing.assert_allclose(
        np.linalg.norm(offsets, axis=1), config.displacement, rtol=1e-12
    )
    # tangential: the offset is orthogonal to the mean direction
    dots = np.einsum("ij,ij->i", offsets, means)
    np.testing.assert_allclose(dots, 0.0, atol=1e-9 * DEFAULT_RADIUS)


def test_boundary_centers_collapse_to_circumcenter():
    config = SynthConfig(mode="boundary", seed=0)
    means = class_means(config)
    centers = ood_centers(config)
    assert np.array_equal(centers, np.zeros_like(centers))
    # the circumcenter is exactly `displacement` away from every class mean
    np.testing.assert_allclose(
        np.linalg.norm(means, axis=1), config.displacement, rtol=1e-12
    )


def test_default_displacement_depends_on_mode():
    assert SynthConfig().displacement == DEFAULT_DISPLACEMENT
    assert SynthConfig(mode="boundary").displacement == BOUNDARY_DISPLACEMENT
    assert SynthConfig(mode="boundary", displacement=4.0).displacement == 4.0
    assert SynthConfig(mode="boundary").radius == BOUNDARY_DISPLACEMENT
    assert SynthConfig().radius == DEFAULT_RADIUS


def test_config_validation():
    with pytest.raises(ConfigError, match="mode"):
        SynthConfig(mode="near")
    with pytest.raises(ConfigError, match="dim"):
        SynthConfig(dim=2)
    with pytest.raises(ConfigError, match="at least 6"):
        SynthConfig(n_train=5)
    with pytest.raises(ConfigError, match="displacement"):
        SynthConfig(displacement=0.0)
    with pytest.raises(ConfigError, match="displacement"):
        SynthConfig(displacement=-1.5)


def test_posteriors_peak_at_generating_class():
    config = SynthConfig(**SMALL, seed=1)
    means = class_means(config)
    probs = posterior_rows(config, means)
    assert np.array_equal(np.argmax(probs, axis=1), np.arange(N_CLASSES))


def test_boundary_ood_posteriors_are_more_ambiguous():
    for seed in range(3):
        bundle = generate_bundle(SynthConfig(**SMALL, mode="boundary", seed=seed))
        e_in = entropy_score(bundle["test_in_probs"]).mean()
        e_ood = entropy_score(bundle["test_ood_probs"]).mean()
        assert e_ood > e_in + 0.2


def test_far_mode_separates_ood():
    bundle = generate_bundle(SynthConfig(**SMALL, seed=0))
    model = fit_knn(bundle["train_embeddings"], k=5, mode="exact")
    score = auroc(
        knn_distance_score(model, bundle["test_in_embeddings"]),
        knn_distance_score(model, bundle["test_ood_embeddings"]),
    )
    assert score >= 0.99


def test_write_bundle_round_trip(tmp_path):
    config = SynthConfig(**SMALL, mode="boundary", seed=5)
    run_path = write_synth_bundle(tmp_path, config)
    assert run_path == tmp_path / "run.json"

    arrays = generate_bundle(config)
    for key, arr in arrays.items():
        if key == "train_labels":
            loaded = read_labels(tmp_path / "train_labels.oodl", N_CLASSES)
        else:
            loaded = read_matrix(tmp_path / f"{key}.oodm")
        assert np.array_equal(loaded, arr)

    saved = json.loads((tmp_path / "synth_config.json").read_text())
    assert saved["mode"] == "boundary"
    assert saved["displacement"] == BOUNDARY_DISPLACEMENT

    run_config = parse_run_config(run_path)
    assert run_config.in_name == "synth_boundary_in"
    bundle = load_bundle(run_config, split="in")
    assert np.array_equal(bundle.train_embeddings, arrays["train_embeddings"])

    report = run_benchmark(run_config)
    methods = {row.method for row in report.rows}
    assert "entropy" in methods and "knn_distance" in methods
    for row in report.rows:
        assert row.in_dataset == "synth_boundary_in"
        assert row.n_in == 200 and row.n_ood == 200
