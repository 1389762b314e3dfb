import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from seqom.align import DissimilarityMatrix, pairwise_matrix
from seqom.cluster import (ClusterAssignment, WeightedKMedoids, cluster_quality, quality_over_k,
                           representative_sequences, weighted_k_medoids)
from seqom.costs import build_cost_scheme
from seqom.exceptions import ConfigError, DataError, DegenerateError
from seqom.sequences import distinct_sequences, from_event_lists

from conftest import random_dataset
from oracles import brute_medoids, direct_quality


def four_points():
    D = np.full((4, 4), 10.0)
    D[0, 1] = D[1, 0] = D[2, 3] = D[3, 2] = 1.0
    np.fill_diagonal(D, 0)
    return D


def random_matrix(rng, n):
    pts = rng.normal(size=(n, 2))
    return np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))


def test_four_point_example():
    a = weighted_k_medoids(four_points(), 2)
    assert a.objective == 2.0
    assert a.medoids.tolist() == [0, 2]
    assert a.labels.tolist() == [0, 0, 1, 1]
    q = cluster_quality(four_points(), a)
    assert q.aswW == pytest.approx(0.9, abs=1e-12)
    assert q.hg == 1.0
    assert q.hc == 0.0
    assert q.pbc > 0.99


def test_k_equals_n():
    D = random_matrix(np.random.default_rng(0), 6)
    a = weighted_k_medoids(D, 6)
    assert a.objective == 0.0
    assert sorted(a.medoids.tolist()) == list(range(6))
    assert a.labels[a.medoids].tolist() == list(range(6))


def test_k_one():
    D = random_matrix(np.random.default_rng(1), 5)
    a = weighted_k_medoids(D, 1)
    assert a.objective == pytest.approx(D.sum(axis=0).min(), rel=1e-12)


@pytest.mark.parametrize("k", [0, 7, 2.5])
def test_bad_k(k):
    with pytest.raises(ConfigError):
        weighted_k_medoids(random_matrix(np.random.default_rng(2), 6), k)


def test_zero_weights_rejected():
    with pytest.raises(DataError):
        weighted_k_medoids(four_points(), 2, weights=np.zeros(4))


def test_bad_init():
    with pytest.raises(ConfigError):
        weighted_k_medoids(four_points(), 2, init="kmeans++")


def test_assignment_invariants_and_objective():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(5, 25))
        D = random_matrix(rng, n)
        w = rng.uniform(0.1, 3, size=n)
        k = int(rng.integers(1, min(n, 6) + 1))
        for init in ("build", "random"):
            a = weighted_k_medoids(D, k, seed=int(rng.integers(100)), init=init, weights=w)
            assert a.labels[a.medoids].tolist() == list(range(k))
            assert np.array_equal(a.labels, np.argmin(D[:, a.medoids], axis=1)) or \
                np.all(D[np.arange(n), a.medoids[a.labels]] == D[:, a.medoids].min(axis=1))
            recomputed = sum(w[i] * D[i, a.medoids[a.labels[i]]] for i in range(n))
            assert math.isclose(a.objective, recomputed, rel_tol=1e-9)


def test_swap_matches_brute_force_at_least_95_percent():
    rng = np.random.default_rng(12)
    hits = trials = 0
    for _ in range(200):
        n = int(rng.integers(4, 10))
        k = int(rng.integers(1, 4))
        D = random_matrix(rng, n)
        w = rng.uniform(0.1, 3, size=n)
        best, _ = brute_medoids(D, w, k)
        a = weighted_k_medoids(D, k, weights=w)
        assert a.objective >= best * (1 - 1e-12)
        hits += math.isclose(a.objective, best, rel_tol=1e-9)
        trials += 1
    assert hits / trials >= 0.95


def test_determinism():
    D = random_matrix(np.random.default_rng(4), 30)
    for init in ("build", "random"):
        a = weighted_k_medoids(D, 4, seed=7, init=init)
        b = weighted_k_medoids(D, 4, seed=7, init=init)
        assert np.array_equal(a.labels, b.labels) and np.array_equal(a.medoids, b.medoids)


def test_quality_matches_direct_oracle():
    rng = np.random.default_rng(5)
    for _ in range(60):
        n = int(rng.integers(3, 16))
        D = random_matrix(rng, n)
        if rng.random() < 0.3:
            D = np.round(D, 1)  # induce ties
        w = rng.uniform(0.1, 3, size=n)
        k = int(rng.integers(2, n + 1))
        labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
        rng.shuffle(labels)
        q = cluster_quality(D, labels, weights=w)
        expected = direct_quality(D, w, labels.tolist())
        for got, want in zip(q.as_tuple(), expected):
            assert got == pytest.approx(want, abs=1e-9)


def test_quality_equal_distances():
    D = np.ones((6, 6)) - np.eye(6)
    q = cluster_quality(D, np.array([0, 0, 0, 1, 1, 1]))
    assert q.aswW == 0.0 and q.hg == 0.0 and q.hc == 0.0


def test_quality_degenerate_inputs():
    D = four_points()
    with pytest.raises(DegenerateError):
        cluster_quality(D, np.zeros(4, dtype=int))
    with pytest.raises(DegenerateError):
        cluster_quality(D, np.array([0, 0, 1, 1]), weights=np.array([1.0, 1.0, 0.0, 0.0]))


def test_singleton_silhouette_is_zero():
    D = four_points()
    q = cluster_quality(D, np.array([0, 1, 1, 1]))
    expected = direct_quality(D, np.ones(4), [0, 1, 1, 1])
    assert q.aswW == pytest.approx(expected[0], abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10), st.floats(0.1, 10))
def test_scaling_and_relabeling_invariance(seed, wscale, dscale):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 15))
    D = random_matrix(rng, n)
    w = rng.uniform(0.5, 2, size=n)
    a = weighted_k_medoids(D, 3, weights=w)
    b = weighted_k_medoids(D * dscale, 3, weights=w * wscale)
    assert np.array_equal(a.medoids, b.medoids) and np.array_equal(a.labels, b.labels)
    assert b.objective == pytest.approx(a.objective * dscale * wscale, rel=1e-9)
    qa = cluster_quality(D, a, weights=w)
    qb = cluster_quality(D * dscale, b, weights=w * wscale)
    perm = rng.permutation(3)
    qc = cluster_quality(D, perm[a.labels], weights=w)
    for x, y, z in zip(qa.as_tuple(), qb.as_tuple(), qc.as_tuple()):
        assert y == pytest.approx(x, abs=1e-9)
        assert z == pytest.approx(x, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_quality_ranges(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 20))
    D = np.round(random_matrix(rng, n), int(rng.integers(0, 3)))
    labels = np.arange(n) % int(rng.integers(2, n + 1))
    q = cluster_quality(D, labels, weights=rng.uniform(0.1, 2, size=n))
    assert -1 <= q.aswW <= 1 and -1 <= q.hg <= 1 and -1 <= q.pbc <= 1 and 0 <= q.hc <= 1


def test_quality_over_k_standardization():
    rng = np.random.default_rng(6)
    D = random_matrix(rng, 20)
    table = quality_over_k(D, range(2, 7))
    v = table.values("aswW")
    z = table.standardized("aswW")
    np.testing.assert_allclose(z, (v - v.mean()) / v.std(ddof=1), atol=1e-12)
    assert table.best_k("aswW") == table.ks[int(np.argmax(v))]
    assert table.best_k("hc") == table.ks[int(np.argmin(table.values("hc")))]
    rows = list(table.rows())
    assert list(rows[0]) == ["k", "aswW", "hg", "pbc", "hc", "aswW_z", "hg_z", "pbc_z", "hc_z"]
    single = quality_over_k(D, [3])
    assert single.standardized("aswW").tolist() == [0.0]
    with pytest.raises(ConfigError):
        quality_over_k(D, [1, 2])


def test_representatives():
    ds = from_event_lists([list("AB"), list("C"), list("AB"), list("D")], weights=[3, 1, 0, 2])
    reps = representative_sequences(ds, np.array([0, 0, 1, 1]))
    assert reps[0] == (("A", "B"), 0.75)
    assert reps[1] == (("D",), 1.0)
    same = from_event_lists([list("AB")] * 3)
    assert representative_sequences(same, np.zeros(3, dtype=int)) == [(("A", "B"), 1.0)]


def test_representative_tie_goes_to_first_case():
    ds = from_event_lists([list("B"), list("A")])
    assert representative_sequences(ds, np.array([0, 0]))[0] == (("B",), 0.5)


def test_representatives_empty_cluster():
    ds = from_event_lists([list("A"), list("B")])
    with pytest.raises(DataError, match="empty"):
        representative_sequences(ds, np.array([0, 2]))


def test_dedupe_then_expand_equals_full_clustering():
    rng = np.random.default_rng(8)
    ds = random_dataset(rng, 60, max_len=4, n_codes=3, weights=True)
    scheme = build_cost_scheme("OMlev", ds)
    full = pairwise_matrix(ds, scheme)
    uniques, uw, mapping = distinct_sequences(ds)
    uds = from_event_lists([ds.alphabet.decode(u) for u in uniques], weights=uw.tolist())
    um = pairwise_matrix(uds, scheme)
    a = weighted_k_medoids(um, 3).expand(mapping)
    b = weighted_k_medoids(full, 3)
    assert math.isclose(a.objective, b.objective, rel_tol=1e-9)
    recomputed = float(np.dot(full.weights, full.square()[np.arange(60), a.medoids[a.labels]]))
    assert math.isclose(recomputed, a.objective, rel_tol=1e-9)


def test_estimator():
    D = four_points()
    est = WeightedKMedoids(n_clusters=2)
    labels = est.fit_predict(D)
    assert labels.tolist() == [0, 0, 1, 1]
    assert est.medoid_indices_.tolist() == [0, 2]
    assert est.predict(np.array([[1.0, 2.0, 9.0, 9.0]])).tolist() == [0]
    assert clone(est).get_params() == est.get_params()
    m = DissimilarityMatrix.from_square(D, weights=[1, 1, 5, 5])
    assert WeightedKMedoids(n_clusters=2).fit(m).objective_ == 6.0  # 1*1 + 5*1


def test_assignment_expand_medoids():
    a = ClusterAssignment(np.array([0, 1]), np.array([0, 1]), 0.0)
    e = a.expand([1, 0, 1])
    assert e.labels.tolist() == [1, 0, 1]
    assert e.medoids.tolist() == [1, 0]
