import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glyphstemma.clustering import Clustering, cluster_frequencies, cluster_purity, kmeans

from oracles import best_two_partition


def partition(labels):
    groups = {}
    for i, lab in enumerate(np.asarray(labels).tolist()):
        groups.setdefault(lab, set()).add(i)
    return frozenset(frozenset(g) for g in groups.values())


def test_k1_is_mean():
    X = np.random.default_rng(3).normal(size=(20, 4))
    c = kmeans(X, 1, seed=5)
    np.testing.assert_allclose(c.centroids[0], X.mean(axis=0), atol=1e-12)
    assert c.counts.tolist() == [20]


def test_k_equals_n_has_zero_sse():
    X = np.random.default_rng(4).normal(size=(7, 3))
    c = kmeans(X, 7, seed=1)
    assert c.sse == 0.0
    assert sorted(c.counts.tolist()) == [1] * 7


def test_two_blobs_match_brute_force():
    rng = np.random.default_rng(11)
    X = np.vstack([rng.normal(0, 0.3, size=(4, 2)), rng.normal(8, 0.3, size=(4, 2))])
    expected = best_two_partition(X)
    assert expected == frozenset([frozenset(range(4)), frozenset(range(4, 8))])
    assert partition(kmeans(X, 2, seed=0).assignment) == expected


def test_duplicate_points_fill_every_cluster():
    X = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]] * 2)
    c = kmeans(X, 4, seed=2)
    assert (c.counts > 0).all() and c.counts.sum() == 7
    for j in range(4):
        np.testing.assert_allclose(c.centroids[j], X[c.assignment == j].mean(axis=0))


def test_errors():
    X = np.zeros((3, 2))
    with pytest.raises(ValueError):
        kmeans(X, 4)
    with pytest.raises(ValueError):
        kmeans(X, 0)


def test_deterministic_given_seed():
    X = np.random.default_rng(9).normal(size=(60, 5))
    a, b = kmeans(X, 6, seed=42), kmeans(X, 6, seed=42)
    assert np.array_equal(a.assignment, b.assignment)
    assert a.centroids.tobytes() == b.centroids.tobytes()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 60), st.integers(1, 8))
def test_sse_trace_non_increasing_and_invariants(seed, n, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3)) * rng.uniform(0.1, 5)
    k = min(k, n)
    c = kmeans(X, k, seed=seed)
    assert all(b <= a for a, b in zip(c.sse_trace, c.sse_trace[1:]))
    assert c.counts.sum() == n and (c.counts > 0).all()
    for j in range(k):
        np.testing.assert_allclose(c.centroids[j], X[c.assignment == j].mean(axis=0), atol=1e-12)
    assert cluster_frequencies(c).freq.sum() == pytest.approx(1.0, abs=1e-9)


def test_permuted_input_same_partition():
    rng = np.random.default_rng(21)
    centers = rng.normal(0, 10, size=(4, 2))
    X = np.vstack([c + rng.normal(0, 0.2, size=(6, 2)) for c in centers])
    perm = rng.permutation(len(X))
    a = kmeans(X, 4, seed=3)
    b = kmeans(X[perm], 4, seed=3)
    # map b's labels back to canonical glyph order
    back = np.empty_like(b.assignment)
    back[perm] = b.assignment
    assert partition(a.assignment) == partition(back)


def _fake(counts, assignment=None):
    counts = np.array(counts)
    assignment = np.repeat(np.arange(len(counts)), counts) if assignment is None else np.array(assignment)
    return Clustering("ms", len(counts), assignment, np.zeros((len(counts), 1)), counts, 0)


def test_frequencies():
    np.testing.assert_allclose(cluster_frequencies(_fake([3, 1])).freq, [0.75, 0.25])
    np.testing.assert_allclose(cluster_frequencies(_fake([2, 2, 2])).freq, [1 / 3] * 3)
    with pytest.raises(ValueError):
        cluster_frequencies(_fake([0, 0]))


def test_purity():
    c = _fake([2, 2])
    assert cluster_purity(c, ["a", "a", "b", "b"]) == 1.0
    assert cluster_purity(_fake([4]), ["a", "a", "b", "b"]) == 0.5
    mixed = _fake([4, 2])
    assert cluster_purity(mixed, ["a", "a", "a", "b", "b", "b"]) == pytest.approx((3 + 2) / 6)
    with pytest.raises(ValueError):
        cluster_purity(c, ["a"])
