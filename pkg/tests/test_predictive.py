import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oodkit import DataError
from oodkit.predictive import PredictiveModel, entropy_score, msp_score


def _entropy_oracle(row):
    # independent high-precision summation: fsum over per-term math.log
    return -math.fsum(p * math.log(max(p, 1e-12)) for p in row)


def test_msp_examples():
    assert msp_score(np.array([[0.7, 0.2, 0.1]]))[0] == pytest.approx(-0.7, rel=1e-6)
    assert msp_score(np.array([[0.0, 1.0, 0.0]]))[0] == -1.0
    uniform = np.full((1, 10), 0.1)
    assert msp_score(uniform)[0] == pytest.approx(-0.1, rel=1e-6)


def test_entropy_examples():
    assert entropy_score(np.array([[0.0, 1.0, 0.0]]))[0] == 0.0
    uniform = np.full((1, 10), 0.1)
    assert entropy_score(uniform)[0] == pytest.approx(math.log(10), rel=1e-6)
    row = [0.5, 0.25, 0.25]
    oracle = _entropy_oracle(row)
    assert oracle == pytest.approx(1.5 * math.log(2), abs=1e-12)
    assert entropy_score(np.array([row]))[0] == pytest.approx(oracle, rel=1e-6)


def test_same_msp_different_entropy():
    # two-way split vs mass spread over the remaining classes
    n = 10
    p_a = np.zeros((1, n))
    p_a[0, :2] = 0.5
    p_b = np.full((1, n), 0.5 / (n - 1))
    p_b[0, 0] = 0.5
    assert msp_score(p_a)[0] == msp_score(p_b)[0]
    assert entropy_score(p_a)[0] < entropy_score(p_b)[0]


@st.composite
def simplex_rows(draw):
    n_classes = draw(st.integers(2, 12))
    n_rows = draw(st.integers(1, 8))
    raw = draw(
        st.lists(
            st.lists(st.floats(1e-9, 1.0), min_size=n_classes, max_size=n_classes),
            min_size=n_rows,
            max_size=n_rows,
        )
    )
    arr = np.array(raw, dtype=np.float64)
    return arr / arr.sum(axis=1, keepdims=True)


@settings(max_examples=80, deadline=None)
@given(simplex_rows())
def test_score_ranges(probs):
    n_classes = probs.shape[1]
    msp = msp_score(probs)
    ent = entropy_score(probs)
    assert np.all(msp >= -1.0)
    assert np.all(msp <= -1.0 / n_classes + 1e-6)
    assert np.all(ent >= 0.0)
    assert np.all(ent <= math.log(n_classes) + 1e-6)


@settings(max_examples=60, deadline=None)
@given(simplex_rows(), st.randoms(use_true_random=False))
def test_permutation_invariance(probs, rand):
    perm = list(range(probs.shape[1]))
    rand.shuffle(perm)
    shuffled = probs[:, perm]
    np.testing.assert_array_equal(msp_score(shuffled), msp_score(probs))
    np.testing.assert_allclose(entropy_score(shuffled), entropy_score(probs), rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(simplex_rows())
def test_entropy_matches_fsum_oracle(probs):
    got = entropy_score(probs)
    probs32 = probs.astype(np.float32)
    expect = [_entropy_oracle(row.astype(np.float64)) for row in probs32]
    np.testing.assert_allclose(got, expect, rtol=1e-9, atol=1e-12)


def test_model_validates_class_count():
    model = PredictiveModel(n_classes=3)
    good = np.array([[0.2, 0.3, 0.5]])
    assert model.msp(good)[0] == pytest.approx(-0.5, rel=1e-6)
    with pytest.raises(DataError, match="model expects 3"):
        model.entropy(np.array([[0.5, 0.5]]))
    with pytest.raises(ValueError):
        PredictiveModel(n_classes=1)


def test_rejects_empty_and_invalid():
    with pytest.raises(DataError):
        msp_score(np.zeros((0, 3)))
    with pytest.raises(DataError):
        entropy_score(np.array([[0.9, 0.3]]))
