import math

import numpy as np
import pytest

from oodkit import DataError
from oodkit.knncore import (
    NeighborList,
    RpForestIndex,
    build_index,
    cosine_distance,
    exact_knn,
    normalize_rows,
    query_index,
)


def naive_knn(train, query, k):
    # independent oracle: per-row cosine via norms, python sort on (dist, idx)
    query = np.asarray(query, dtype=np.float64)
    qn = math.sqrt(float(query @ query))
    dists = []
    for i, row in enumerate(np.asarray(train, dtype=np.float64)):
        rn = math.sqrt(float(row @ row))
        dists.append(1.0 - float(row @ query) / (rn * qn))
    order = sorted(range(len(dists)), key=lambda i: (dists[i], i))[:k]
    return np.array(order), np.array([dists[i] for i in order])


def test_cosine_distance_examples():
    assert cosine_distance(np.array([3.0, 4.0]), np.array([3.0, 4.0])) == 0.0
    assert cosine_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0
    assert cosine_distance(np.array([1.0, 0.0]), np.array([-2.0, 0.0])) == 2.0


def test_cosine_distance_errors():
    with pytest.raises(DataError, match="zero-norm"):
        cosine_distance(np.zeros(3), np.ones(3))
    with pytest.raises(DataError, match="dimension mismatch"):
        cosine_distance(np.ones(3), np.ones(4))


def test_exact_knn_examples():
    train = np.eye(3, dtype=np.float32)[:2]
    hit = exact_knn(train, np.array([1.0, 0.0, 0.0]), k=1)
    np.testing.assert_array_equal(hit.indices, [0])
    assert hit.distances[0] == 0.0

    query = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    both = exact_knn(train, query, k=2)
    np.testing.assert_array_equal(both.indices, [0, 1])
    np.testing.assert_allclose(both.distances, [1 - 1 / math.sqrt(2)] * 2, atol=1e-12)

    with pytest.raises(DataError, match="K exceeds training size"):
        exact_knn(train, query, k=3)


def test_exact_knn_matches_naive_oracle():
    rng = np.random.default_rng(11)
    for trial in range(20):
        n = int(rng.integers(5, 500))
        d = int(rng.integers(2, 33))
        k = int(rng.integers(1, min(n, 20) + 1))
        train = rng.normal(size=(n, d))
        query = rng.normal(size=d)
        got = exact_knn(train, query, k)
        want_idx, want_dist = naive_knn(train, query, k)
        np.testing.assert_array_equal(got.indices, want_idx)
        np.testing.assert_allclose(got.distances, want_dist, atol=1e-9)


def test_exact_knn_tie_break_prefers_lower_index():
    train = np.tile(np.array([[0.6, 0.8]]), (7, 1))
    res = exact_knn(train, np.array([0.6, 0.8]), k=3)
    np.testing.assert_array_equal(res.indices, [0, 1, 2])
    np.testing.assert_array_equal(res.distances, [0.0, 0.0, 0.0])


def test_normalize_rows_rejects_zero_rows():
    with pytest.raises(DataError, match="zero-norm embedding at row 1"):
        normalize_rows(np.array([[1.0, 0.0], [0.0, 0.0]]))


def _tree_leaves(index, root):
    # walk one tree, returning (leaf sizes, all member indices)
    sizes, members, stack = [], [], [root]
    while stack:
        node = stack.pop()
        if index.child_left[node] < 0:
            start = index.leaf_start[node]
            count = index.leaf_count[node]
            sizes.append(int(count))
            members.extend(index.leaf_items[start : start + count].tolist())
        else:
            stack.append(int(index.child_left[node]))
            stack.append(int(index.child_right[node]))
    return sizes, members


def test_build_index_leaves_partition_rows():
    rng = np.random.default_rng(3)
    index = build_index(rng.normal(size=(100, 8)), n_trees=4, leaf_capacity=10, seed=42)
    for root in index.tree_roots:
        sizes, members = _tree_leaves(index, int(root))
        assert max(sizes) <= 10
        assert sorted(members) == list(range(100))


def test_build_index_internal_normals_are_unit():
    rng = np.random.default_rng(4)
    index = build_index(rng.normal(size=(120, 6)), n_trees=3, leaf_capacity=8, seed=7)
    internal = index.child_left >= 0
    norms = np.linalg.norm(index.normals[internal], axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


def test_build_index_deterministic_and_seed_sensitive(tmp_path):
    rng = np.random.default_rng(5)
    data = rng.normal(size=(200, 12))
    a = build_index(data, n_trees=5, leaf_capacity=16, seed=42)
    b = build_index(data, n_trees=5, leaf_capacity=16, seed=42)
    a.save(tmp_path / "a.oodi")
    b.save(tmp_path / "b.oodi")
    assert (tmp_path / "a.oodi").read_bytes() == (tmp_path / "b.oodi").read_bytes()

    c = build_index(data, n_trees=5, leaf_capacity=16, seed=1)
    d = build_index(data, n_trees=5, leaf_capacity=16, seed=2)
    assert not np.array_equal(c.child_left, d.child_left) or not np.array_equal(
        c.leaf_items, d.leaf_items
    )


def test_build_index_on_duplicate_rows():
    # every bisector split degenerates; balanced fallback must keep capacity
    data = np.tile(np.array([[0.3, 0.4, 0.5]]), (50, 1))
    index = build_index(data, n_trees=2, leaf_capacity=4, seed=0)
    for root in index.tree_roots:
        sizes, members = _tree_leaves(index, int(root))
        assert max(sizes) <= 4
        assert sorted(members) == list(range(50))
    res = index.query(np.array([0.3, 0.4, 0.5]), k=3, search_budget=50)
    np.testing.assert_array_equal(res.indices, [0, 1, 2])
    np.testing.assert_allclose(res.distances, 0.0, atol=1e-12)


def test_build_index_validation():
    with pytest.raises(DataError, match="at least 2"):
        build_index(np.ones((1, 3)))
    with pytest.raises(DataError, match="n_trees"):
        build_index(np.ones((5, 3)) + np.arange(5)[:, None], n_trees=0)
    with pytest.raises(DataError, match="leaf_capacity"):
        build_index(np.ones((5, 3)) + np.arange(5)[:, None], leaf_capacity=1)


def test_full_budget_equals_exact():
    rng = np.random.default_rng(9)
    train = rng.normal(size=(300, 16))
    index = build_index(train, n_trees=6, leaf_capacity=16, seed=3)
    for _ in range(25):
        query = rng.normal(size=16)
        approx = index.query(query, k=7, search_budget=300)
        exact = exact_knn(train, query, k=7)
        np.testing.assert_array_equal(approx.indices, exact.indices)
        np.testing.assert_array_equal(approx.distances, exact.distances)


def test_returned_distances_are_true_cosine():
    rng = np.random.default_rng(13)
    train = rng.normal(size=(400, 10))
    index = build_index(train, n_trees=5, leaf_capacity=16, seed=1)
    for _ in range(10):
        query = rng.normal(size=10)
        res = index.query(query, k=5)
        for idx, dist in zip(res.indices, res.distances):
            assert abs(dist - cosine_distance(query, train[idx])) <= 1e-6


def test_recall_monotone_in_budget():
    rng = np.random.default_rng(21)
    train = rng.normal(size=(1000, 16))
    index = build_index(train, n_trees=5, leaf_capacity=16, seed=2)
    queries = rng.normal(size=(100, 16))
    k = 10
    budgets = [k, 5 * k, 20 * k, 1000]
    prev = np.zeros(len(queries))
    for budget in budgets:
        recalls = []
        for qi, query in enumerate(queries):
            exact = set(exact_knn(train, query, k).indices.tolist())
            approx = set(index.query(query, k, budget).indices.tolist())
            recalls.append(len(exact & approx) / k)
        recalls = np.array(recalls)
        assert np.all(recalls >= prev - 1e-12)
        prev = recalls
    assert prev.mean() == 1.0  # full budget is exhaustive


def test_training_row_query_finds_itself():
    rng = np.random.default_rng(31)
    train = rng.normal(size=(500, 12))
    index = build_index(train, n_trees=10, leaf_capacity=32, seed=5)
    for row in range(0, 500, 5):
        res = index.query(train[row], k=5)
        assert row in res.indices.tolist()
        assert res.distances[0] <= 1e-12


def test_default_budget_formula():
    rng = np.random.default_rng(17)
    index = build_index(rng.normal(size=(50, 4)), n_trees=7, leaf_capacity=4, seed=0)
    assert index.default_budget(3) == 7 * 3 * 10


def test_query_validation():
    rng = np.random.default_rng(19)
    train = rng.normal(size=(20, 4))
    index = build_index(train, seed=0)
    with pytest.raises(DataError, match="K exceeds training size"):
        index.query(np.ones(4), k=21)
    with pytest.raises(DataError, match="search_budget"):
        index.query(np.ones(4), k=5, search_budget=3)
    with pytest.raises(DataError, match="query dimension"):
        index.query(np.ones(5), k=2)
    with pytest.raises(DataError, match="zero-norm query"):
        index.query(np.zeros(4), k=2)


def test_index_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(23)
    train = rng.normal(size=(150, 8))
    index = build_index(train, n_trees=4, leaf_capacity=8, seed=11)
    path = tmp_path / "index.oodi"
    index.save(path)
    loaded = RpForestIndex.load(path)
    assert loaded.seed == 11
    assert loaded.n_trees == 4
    assert loaded.leaf_capacity == 8
    for _ in range(20):
        query = rng.normal(size=8)
        a = index.query(query, k=6)
        b = loaded.query(query, k=6)
        np.testing.assert_array_equal(a.indices, b.indices)
        np.testing.assert_array_equal(a.distances, b.distances)


def test_index_load_rejects_corrupt_files(tmp_path):
    rng = np.random.default_rng(29)
    index = build_index(rng.normal(size=(30, 4)), n_trees=2, seed=0)
    path = tmp_path / "index.oodi"
    index.save(path)
    raw = path.read_bytes()

    bad_magic = tmp_path / "bad.oodi"
    bad_magic.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(DataError, match="bad magic"):
        RpForestIndex.load(bad_magic)

    truncated = tmp_path / "short.oodi"
    truncated.write_bytes(raw[:-8])
    with pytest.raises(DataError, match="truncated"):
        RpForestIndex.load(truncated)


def test_query_index_wrapper():
    rng = np.random.default_rng(37)
    train = rng.normal(size=(40, 6))
    index = build_index(train, seed=1)
    res = query_index(index, train[3], k=2, search_budget=40)
    assert isinstance(res, NeighborList)
    assert res.indices[0] == 3
