import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from seqom.align import (DissimilarityMatrix, OptimalMatching, cross_distances, om_distance,
                         pairwise_matrix, read_matrix, write_matrix)
from seqom.costs import (CostScheme, IndelModel, SubstitutionMatrix, build_cost_scheme,
                         constant_costs)
from seqom.exceptions import DataError
from seqom.sequences import EventAlphabet, from_event_lists

from conftest import random_dataset
from oracles import brute_force_distance

PRESET_KW = {"OMlev": {}, "OMtr": {}, "OMsf": {},
             "LOMtr": {"e": 0.1, "g": 0.8}, "LOMsf": {"e": 0.3, "g": 0.5}}


def schemes_for(ds):
    return {m: build_cost_scheme(m, ds, **kw) for m, kw in PRESET_KW.items()}


def lev(codes="ABCD", sub=2, indel=1):
    return constant_costs(EventAlphabet(codes), sub, indel)


@pytest.mark.parametrize("sub", [2, 5])
def test_abcd_acb_is_three(sub):
    assert om_distance("ABCD", "ACB", lev(sub=sub)) == 3.0


def test_zero_and_one_element_cases():
    s = lev()
    assert om_distance("A", "A", s) == 0.0
    assert om_distance("A", "B", s) == 2.0
    assert om_distance("A", "AB", s) == 1.0
    assert om_distance("ABC", "ABC", s) == 0.0


def test_trate_scheme_small_example():
    ds = from_event_lists([list("AB"), list("AB")])
    s = build_cost_scheme("OMtr", ds)
    assert om_distance("AB", "AA", s) == 1.0


def test_maxlen_normalization():
    s = lev()
    assert om_distance("ABCD", "ACB", s, normalize="maxlen") == 3.0 / 4


def test_unknown_code_and_empty_sequence():
    s = lev()
    with pytest.raises(DataError, match="outside"):
        om_distance("AZ", "A", s)
    with pytest.raises(DataError, match="zero-length"):
        om_distance("", "A", s)


def test_localized_indel_with_uniform_costs_matches_constant():
    # e = 0.5, g = 0 gives unit indel cost whenever gamma_max = 2
    a = EventAlphabet("ABC")
    base = lev("ABC")
    loc = CostScheme("x", base.substitution, IndelModel.localized(0.5, 0.0))
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = "".join(rng.choice(list(a.codes), size=rng.integers(1, 6)))
        y = "".join(rng.choice(list(a.codes), size=rng.integers(1, 6)))
        assert om_distance(x, y, loc) == om_distance(x, y, base)


def test_brute_force_equivalence_sample():
    rng = np.random.default_rng(1)
    for trial in range(5):
        ds = random_dataset(rng, 30, max_len=5, n_codes=4, min_len=2, weights=True)
        for name, scheme in schemes_for(ds).items():
            for _ in range(40):
                x = ds.decoded(int(rng.integers(len(ds))))[: int(rng.integers(1, 6))]
                y = ds.decoded(int(rng.integers(len(ds))))[: int(rng.integers(1, 6))]
                assert om_distance(x, y, scheme) == brute_force_distance(x, y, scheme), (name, x, y)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_symmetry_identity_and_bounds(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 15, max_len=7, n_codes=5, min_len=2)
    for name, scheme in schemes_for(ds).items():
        for _ in range(5):
            x = ds.decoded(int(rng.integers(len(ds))))
            y = ds.decoded(int(rng.integers(len(ds))))
            d = om_distance(x, y, scheme)
            assert d == om_distance(y, x, scheme)
            assert om_distance(x, x, scheme) == 0.0
            assert d >= 0
            if name == "OMlev":
                # delete everything then insert everything
                assert d <= len(x) + len(y)


def test_triangle_inequality_levenshtein_exhaustive():
    s = lev("ABC")
    seqs = ["".join(p) for n in range(1, 4) for p in itertools.product("ABC", repeat=n)]
    m = np.array([[om_distance(a, b, s) for b in seqs] for a in seqs])
    # m[i, k] <= m[i, j] + m[j, k] for all triples
    assert np.all(m[:, None, :] <= m[:, :, None] + m[None, :, :])


def test_distance_monotone_in_substitution_cost():
    rng = np.random.default_rng(4)
    ds = random_dataset(rng, 20, max_len=6, n_codes=4)
    cheap, dear = lev(sub=1.5), lev(sub=2.5)
    for i in range(len(ds)):
        for j in range(i):
            x, y = ds.decoded(i), ds.decoded(j)
            assert om_distance(x, y, cheap) <= om_distance(x, y, dear)


def test_pairwise_matches_single_calls():
    rng = np.random.default_rng(6)
    ds = random_dataset(rng, 25, max_len=6, n_codes=4, weights=True)
    scheme = build_cost_scheme("LOMsf", ds, e=0.2, g=0.6)
    m = pairwise_matrix(ds, scheme)
    assert len(m.values) == 25 * 24 // 2
    sq = m.square()
    for i in range(len(ds)):
        for j in range(len(ds)):
            assert sq[i, j] == om_distance(ds.sequences[i], ds.sequences[j], scheme)
    assert m[3, 7] == m[7, 3] == sq[3, 7]
    assert np.array_equal(m.weights, ds.weights)


def test_dedupe_and_threads_are_byte_identical():
    rng = np.random.default_rng(7)
    ds = random_dataset(rng, 120, max_len=8, n_codes=4, min_len=3)
    scheme = build_cost_scheme("OMtr", ds)
    ref = pairwise_matrix(ds, scheme, dedupe=False, threads=1).values.tobytes()
    for dedupe in (False, True):
        for threads in (1, 3, 8):
            assert pairwise_matrix(ds, scheme, dedupe=dedupe, threads=threads).values.tobytes() == ref


def test_cross_distances_agree_with_pairwise():
    rng = np.random.default_rng(8)
    ds = random_dataset(rng, 12, max_len=5)
    scheme = lev()
    seqs = [ds.decoded(i) for i in range(len(ds))]
    cross = cross_distances(seqs, seqs, scheme, threads=2)
    assert np.array_equal(cross, pairwise_matrix(ds, scheme).square())


def test_single_case_matrix():
    ds = from_event_lists([["A"]])
    m = pairwise_matrix(ds, lev("A"))
    assert m.n == 1 and len(m.values) == 0
    assert m.square().shape == (1, 1)


@pytest.mark.parametrize("suffix", [".txt", ".npz"])
def test_matrix_round_trip(tmp_path, suffix):
    rng = np.random.default_rng(9)
    ds = random_dataset(rng, 30, weights=True)
    m = pairwise_matrix(ds, build_cost_scheme("OMsf", ds))
    path = tmp_path / ("m" + suffix)
    write_matrix(m, path)
    assert read_matrix(path) == m
    if suffix == ".txt":
        write_matrix(read_matrix(path), tmp_path / "again.txt")
        assert (tmp_path / "again.txt").read_bytes() == path.read_bytes()


def test_truncated_matrix_file(tmp_path):
    ds = random_dataset(np.random.default_rng(10), 10)
    m = pairwise_matrix(ds, lev())
    path = tmp_path / "m.txt"
    write_matrix(m, path)
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[:-3]))
    with pytest.raises(DataError, match="condensed length mismatch"):
        read_matrix(path)


def test_corrupted_matrix_file(tmp_path):
    ds = random_dataset(np.random.default_rng(11), 10)
    m = pairwise_matrix(ds, lev())
    path = tmp_path / "m.txt"
    write_matrix(m, path)
    lines = path.read_text().splitlines(keepends=True)
    lines[-1] = "123.5\n"
    path.write_text("".join(lines))
    with pytest.raises(DataError, match="checksum failure"):
        read_matrix(path)


def test_matrix_rejects_wrong_length():
    with pytest.raises(DataError, match="condensed length mismatch"):
        DissimilarityMatrix(("a", "b", "c"), [1, 1, 1], [1.0, 2.0])


def test_from_square_round_trip():
    sq = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], dtype=float)
    m = DissimilarityMatrix.from_square(sq)
    assert np.array_equal(m.square(), sq)
    with pytest.raises(DataError):
        DissimilarityMatrix.from_square(sq + np.eye(3))


def test_estimator_api():
    seqs = [list("ABC"), list("ABD"), list("CDA"), list("AB")]
    om = OptimalMatching(measure="LOMtr", e=0.1, g=0.8)
    sq = om.fit_transform(seqs)
    assert sq.shape == (4, 4) and np.allclose(sq, sq.T)
    assert np.array_equal(om.transform(seqs), sq)
    assert om.transform([list("ABC")]).shape == (1, 4)
    params = om.get_params()
    assert params["measure"] == "LOMtr" and params["e"] == 0.1
    twin = clone(om)
    assert twin.get_params() == params and not hasattr(twin, "scheme_")
    assert om.pairwise().n == 4


def test_estimator_weights_flow_into_scheme():
    seqs = [list("AB"), list("AC")]
    a = OptimalMatching(measure="OMtr").fit(seqs, sample_weight=[3.0, 1.0]).scheme_
    b = OptimalMatching(measure="OMtr", weighted=False).fit(seqs, sample_weight=[3.0, 1.0]).scheme_
    assert a.substitution["A", "B"] == 2 - 0.75
    assert b.substitution["A", "B"] == 2 - 0.5


def test_custom_substitution_matrix():
    a = EventAlphabet("XY")
    sub = SubstitutionMatrix(a, np.array([[0.0, 0.7], [0.7, 0.0]]))
    s = CostScheme("custom", sub, IndelModel.constant(1.0))
    assert om_distance("XY", "YY", s) == 0.7
    assert om_distance("X", "YX", s) == 1.0
