import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqom.costs import (CostScheme, IndelModel, SubstitutionMatrix, build_cost_scheme,
                         constant_costs, localized_indel_cost, read_substitution_csv,
                         shared_future_substitution, transition_rates, trate_substitution,
                         validate_cost_scheme, write_substitution_csv)
from seqom.exceptions import ConfigError
from seqom.sequences import EventAlphabet, from_event_lists

from conftest import random_dataset


def ds_of(*seqs, weights=None):
    return from_event_lists([list(s) for s in seqs], weights=weights)


def rate(tm, a, b):
    idx = tm.alphabet.index
    return tm.rates[idx[a], idx[b]]


def test_levenshtein_preset():
    s = constant_costs(EventAlphabet("ABC"), 2, 1)
    assert s.indel == IndelModel("constant", c=1.0)
    assert s.substitution["A", "B"] == 2.0
    assert all(s.substitution[c, c] == 0.0 for c in "ABC")
    assert validate_cost_scheme(s).ok
    lev = build_cost_scheme("OMlev", ds_of("ABC"))
    assert np.array_equal(lev.substitution.cost, s.substitution.cost)


@pytest.mark.parametrize("sub, indel", [(2, 0), (0, 1), (-1, 1)])
def test_constant_costs_reject_nonpositive(sub, indel):
    with pytest.raises(ConfigError):
        constant_costs(EventAlphabet("AB"), sub, indel)


def test_transition_rates_terminal_only_event():
    tm = transition_rates(ds_of("AB", "AB"), lag=1)
    assert rate(tm, "A", "B") == 1.0
    assert tm.rates[tm.alphabet.index["B"]].sum() == 0.0
    assert tm.pair_counts[0, 1] == 2 and tm.antecedent_counts[0] == 2


def test_transition_rates_non_terminal_denominator():
    tm = transition_rates(ds_of("ABC", "AB"), lag=1)
    assert rate(tm, "A", "B") == 1.0
    assert rate(tm, "B", "C") == 1.0


def test_transition_rates_all_occurrence_denominator():
    tm = transition_rates(ds_of("ABC", "AB"), lag=1, denominator="all")
    assert rate(tm, "B", "C") == 0.5  # B occurs twice, once with a successor


def test_transition_rates_lag():
    tm = transition_rates(ds_of("ABC", "AXC"), lag=2)
    assert rate(tm, "A", "C") == 1.0
    assert rate(tm, "A", "B") == 0.0


def test_lag_beyond_every_length_warns_and_gives_zeros():
    with pytest.warns(UserWarning, match="no event pair"):
        tm = transition_rates(ds_of("AB", "A"), lag=5)
    assert not tm.rates.any()


def test_transition_rates_reject_bad_lag():
    with pytest.raises(ConfigError):
        transition_rates(ds_of("AB"), lag=0)


def test_trate_costs():
    sub = trate_substitution(transition_rates(ds_of("AB", "AB")))
    assert sub["A", "B"] == 1.0
    assert sub["A", "A"] == 0.0 and sub["B", "B"] == 0.0


def test_trate_never_adjacent_is_two():
    sub = trate_substitution(transition_rates(ds_of("AB", "CD")))
    assert sub["A", "C"] == 2.0


def test_trate_diagonal_forced_zero_with_self_transitions():
    tm = transition_rates(ds_of("AAB"))
    assert rate(tm, "A", "A") == 0.5
    assert trate_substitution(tm)["A", "A"] == 0.0


def test_shared_future_identical_futures():
    sub = shared_future_substitution(ds_of("AC", "BC"), normalize_max2=False)
    assert sub["A", "B"] == 0.0
    assert sub["A", "A"] == 0.0


def test_shared_future_disjoint_futures_golden():
    # hand computation: futures C and D each have column sum 1, so (1-0)^2/1 + (0-1)^2/1
    sub = shared_future_substitution(ds_of("AC", "BD"), normalize_max2=False)
    assert sub["A", "B"] == 2.0


def test_shared_future_normalization_is_monotone():
    rng = np.random.default_rng(11)
    ds = random_dataset(rng, 30, max_len=6, n_codes=5, min_len=2)
    raw = shared_future_substitution(ds, normalize_max2=False).cost
    scaled = shared_future_substitution(ds, normalize_max2=True).cost
    off = ~np.eye(len(ds.alphabet), dtype=bool)
    assert scaled[off].max() == 2.0
    assert np.array_equal(raw == 0, scaled == 0)
    r, s = raw[off], scaled[off]
    assert np.array_equal(np.argsort(r, kind="stable"), np.argsort(s, kind="stable")) or \
        np.all(np.sign(np.subtract.outer(r, r)) == np.sign(np.subtract.outer(s, s)))


def test_localized_indel_examples():
    a = EventAlphabet("ABU")
    cost = np.full((3, 3), 2.0)
    np.fill_diagonal(cost, 0)
    sub = SubstitutionMatrix(a, cost)
    s = CostScheme("x", sub, IndelModel.localized(0.1, 0.8))
    assert localized_indel_cost(s, "U", "A", "B") == pytest.approx(1.8, abs=1e-15)
    s = CostScheme("x", sub, IndelModel.localized(0.5, 0.0))
    for left, right in [("A", "B"), ("U", "U"), (None, "A"), (None, None)]:
        assert localized_indel_cost(s, "U", left, right) == 1.0
    s = CostScheme("x", sub, IndelModel.localized(0.0, 1.0))
    assert localized_indel_cost(s, "U", "U", "U") == 0.0


def test_localized_boundary_uses_gamma_max():
    a = EventAlphabet("AU")
    sub = SubstitutionMatrix(a, np.array([[0.0, 0.5], [0.5, 0.0]]))
    s = CostScheme("x", sub, IndelModel.localized(0.0, 1.0))
    assert localized_indel_cost(s, "U", None, "A") == (0.5 + 0.5) / 2
    sub = SubstitutionMatrix(EventAlphabet("AUV"),
                             np.array([[0, 0.5, 2.0], [0.5, 0, 1.0], [2.0, 1.0, 0]]))
    s = CostScheme("x", sub, IndelModel.localized(0.0, 1.0))
    assert localized_indel_cost(s, "U", None, "A") == (2.0 + 0.5) / 2


@pytest.mark.parametrize("e, g", [(0.1, 0.7), (0.0, 0.9), (0.3, 0.2), (0.2, 0.5)])
def test_constraint_rejected_at_construction(e, g):
    with pytest.raises(ConfigError, match="2e \\+ g >= 1"):
        IndelModel.localized(e, g)
    with pytest.raises(ConfigError):
        build_cost_scheme("LOMtr", ds_of("AB"), e=e, g=g)


def test_validation_report():
    assert validate_cost_scheme(constant_costs(EventAlphabet("AB"))).ok
    sub = constant_costs(EventAlphabet("AB")).substitution
    bad = CostScheme("x", sub, IndelModel("localized", e=0.1, g=0.7))
    report = validate_cost_scheme(bad)
    assert not report.ok and any("2e + g >= 1 violated" in v for v in report.violations)
    asym = SubstitutionMatrix(EventAlphabet("AB"), np.array([[0.0, 1.0], [2.0, 0.0]]))
    report = validate_cost_scheme(CostScheme("x", asym, IndelModel()))
    assert "asymmetric substitution matrix" in report.violations
    diag = SubstitutionMatrix(EventAlphabet("AB"), np.array([[1.0, 1.0], [1.0, 0.0]]))
    assert "nonzero diagonal in substitution matrix" in validate_cost_scheme(
        CostScheme("x", diag, IndelModel())).violations


@pytest.mark.parametrize("e", [0.0, 0.1, 0.25, 0.4, 0.5])
def test_boundary_of_constraint_accepted(e):
    IndelModel.localized(e, 1 - 2 * e)


@pytest.mark.parametrize("measure", ["OMlev", "OMtr", "OMsf", "LOMtr", "LOMsf"])
def test_presets_validate(measure):
    rng = np.random.default_rng(5)
    ds = random_dataset(rng, 20, n_codes=4, min_len=2)
    kw = {"e": 0.1, "g": 0.8} if measure.startswith("LOM") else {}
    s = build_cost_scheme(measure, ds, **kw)
    assert s.name == measure
    assert validate_cost_scheme(s).ok
    assert s.indel.kind == ("localized" if measure.startswith("LOM") else "constant")


def test_unknown_measure():
    with pytest.raises(ConfigError):
        build_cost_scheme("OMham", ds_of("AB"))


def test_substitution_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    ds = random_dataset(rng, 30, n_codes=6, min_len=2)
    sub = shared_future_substitution(ds)
    write_substitution_csv(sub, tmp_path / "s.csv")
    back = read_substitution_csv(tmp_path / "s.csv")
    assert back.alphabet == sub.alphabet
    assert np.array_equal(back.cost, sub.cost)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 25), st.integers(1, 3))
def test_matrix_properties(seed, n, lag):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n, max_len=6, n_codes=5, weights=True)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tm = transition_rates(ds, lag=lag)
        sf = shared_future_substitution(ds, lag=lag)
    rows = tm.rates.sum(axis=1)
    assert np.all((tm.rates >= 0) & (tm.rates <= 1))
    assert np.all((np.abs(rows) < 1e-12) | (np.abs(rows - 1) < 1e-12))
    tr = trate_substitution(tm).cost
    for c in (tr, sf.cost):
        assert np.array_equal(c, c.T)
        assert np.all(np.diag(c) == 0)
        assert np.all(c >= 0)
    assert np.all((tr >= 0) & (tr <= 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 20))
def test_replication_and_equal_weight_invariance(seed, n):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n, max_len=6, n_codes=4, min_len=2)
    lists = [ds.decoded(i) for i in range(n)]
    doubled = from_event_lists(lists + lists)
    for build in (lambda d, **k: trate_substitution(transition_rates(d, **k)).cost,
                  lambda d, **k: shared_future_substitution(d, **k).cost):
        base = build(ds)
        np.testing.assert_allclose(build(doubled), base, rtol=0, atol=1e-12)
        heavy = from_event_lists(lists, weights=[3.7] * n)
        np.testing.assert_allclose(build(heavy, weighted=True), build(ds, weighted=False),
                                   rtol=0, atol=1e-12)
