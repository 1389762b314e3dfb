"""Substitution and indel cost models for optimal matching.

Five named presets are supported:

========  ==========================  ===========================
name      substitution                indel
========  ==========================  ===========================
OMlev     constant 2                  constant 1
OMtr      transition-rate based       constant 1
OMsf      shared-future based         constant 1
LOMtr     transition-rate based       localized (e, g)
LOMsf     shared-future based         localized (e, g)
========  ==========================  ===========================
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DataError
from .sequences import EventAlphabet, SequenceDataset

__all__ = [
    "PRESETS",
    "TransitionMatrix",
    "SubstitutionMatrix",
    "IndelModel",
    "CostScheme",
    "ValidationReport",
    "constant_costs",
    "transition_rates",
    "trate_substitution",
    "shared_future_substitution",
    "localized_indel_cost",
    "validate_cost_scheme",
    "build_cost_scheme",
    "write_substitution_csv",
    "read_substitution_csv",
]

PRESETS = ("OMlev", "OMtr", "OMsf", "LOMtr", "LOMsf")

# slack for the 2e + g >= 1 check so that g = 1 - 2e grids pass
_CONSTRAINT_SLACK = 1e-12


@dataclass(frozen=True)
class TransitionMatrix:
    """Lag-q transition rates ``rates[a, b] = n(ab) / n(a)``."""

    alphabet: EventAlphabet
    rates: np.ndarray
    pair_counts: np.ndarray
    antecedent_counts: np.ndarray
    lag: int = 1


@dataclass(frozen=True, eq=False)
class SubstitutionMatrix:
    alphabet: EventAlphabet
    cost: np.ndarray

    def __post_init__(self):
        cost = np.array(self.cost, dtype=float)
        cost.setflags(write=False)
        object.__setattr__(self, "cost", cost)

    @cached_property
    def gamma_max(self) -> float:
        n = len(self.alphabet)
        if n < 2:
            return 0.0
        off = self.cost[~np.eye(n, dtype=bool)]
        return float(off.max())

    def __getitem__(self, pair):
        a, b = pair
        idx = self.alphabet.index
        return float(self.cost[idx[a], idx[b]])


@dataclass(frozen=True)
class IndelModel:
    """Constant indel cost ``c`` or localized cost with parameters ``e``, ``g``."""

    kind: str = "constant"
    c: float = 1.0
    e: float = 0.0
    g: float = 0.0

    @classmethod
    def constant(cls, c: float = 1.0) -> "IndelModel":
        model = cls("constant", c=float(c))
        _raise_on(_indel_violations(model))
        return model

    @classmethod
    def localized(cls, e: float, g: float) -> "IndelModel":
        model = cls("localized", e=float(e), g=float(g))
        _raise_on(_indel_violations(model))
        return model


@dataclass(frozen=True, eq=False)
class CostScheme:
    name: str
    substitution: SubstitutionMatrix
    indel: IndelModel
    options: dict = field(default_factory=dict)

    @property
    def alphabet(self) -> EventAlphabet:
        return self.substitution.alphabet


@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def _indel_violations(model: IndelModel) -> list[str]:
    out = []
    if model.kind == "constant":
        if not model.c > 0:
            out.append(f"indel cost must be positive, got {model.c!r}")
    elif model.kind == "localized":
        if model.e < 0 or model.g < 0:
            out.append(f"e and g must be nonnegative, got e={model.e!r}, g={model.g!r}")
        if 2 * model.e + model.g < 1 - _CONSTRAINT_SLACK:
            out.append(f"2e + g >= 1 violated (e={model.e!r}, g={model.g!r}, "
                       f"2e+g={2 * model.e + model.g!r})")
    else:
        out.append(f"unknown indel kind {model.kind!r}")
    return out


def _raise_on(violations):
    if violations:
        raise ConfigError("; ".join(violations))


def validate_cost_scheme(scheme: CostScheme) -> ValidationReport:
    """Check symmetry, zero diagonal, nonnegativity and indel constraints."""
    cost = np.asarray(scheme.substitution.cost, dtype=float)
    n = len(scheme.substitution.alphabet)
    violations = []
    if cost.shape != (n, n):
        violations.append(f"substitution matrix shape {cost.shape} does not match alphabet size {n}")
        return ValidationReport(violations)
    if not np.all(np.isfinite(cost)):
        violations.append("non-finite substitution cost")
    if not np.array_equal(cost, cost.T):
        violations.append("asymmetric substitution matrix")
    if np.any(np.diag(cost) != 0):
        violations.append("nonzero diagonal in substitution matrix")
    if np.any(cost < 0):
        violations.append("negative substitution cost")
    if n >= 2:
        gmax = scheme.substitution.gamma_max
        if gmax != cost[~np.eye(n, dtype=bool)].max():
            violations.append("gamma_max inconsistent with matrix")
    violations.extend(_indel_violations(scheme.indel))
    return ValidationReport(violations)


def _checked(scheme: CostScheme) -> CostScheme:
    report = validate_cost_scheme(scheme)
    if not report.ok:
        raise ConfigError(f"invalid cost scheme {scheme.name!r}: " + "; ".join(report.violations))
    return scheme


def constant_costs(alphabet: EventAlphabet, sub_cost: float = 2.0, indel_cost: float = 1.0,
                   name: str = "OMlev") -> CostScheme:
    """Constant substitution and indel costs (Levenshtein-type scheme)."""
    if not sub_cost > 0 or not indel_cost > 0:
        raise ConfigError(f"costs must be positive, got substitution={sub_cost!r}, indel={indel_cost!r}")
    n = len(alphabet)
    cost = np.full((n, n), float(sub_cost))
    np.fill_diagonal(cost, 0.0)
    cost.setflags(write=False)
    return _checked(CostScheme(name, SubstitutionMatrix(alphabet, cost), IndelModel.constant(indel_cost)))


def transition_rates(ds: SequenceDataset, lag: int = 1, weighted: bool = True,
                     denominator: str = "successor") -> TransitionMatrix:
    """Estimate lag-``q`` transition rates between event codes.

    ``n(ab)`` counts positions p holding ``a`` with ``b`` at p + lag in the
    same sequence. With ``denominator="successor"`` (default), ``n(a)``
    counts only occurrences of ``a`` that have a position p + lag, so each
    observed row is a probability vector. ``denominator="all"`` counts every
    occurrence of ``a`` instead. With ``weighted`` each occurrence counts
    with its case weight.
    """
    if int(lag) != lag or lag < 1:
        raise ConfigError(f"lag must be a positive integer, got {lag!r}")
    if denominator not in ("successor", "all"):
        raise ConfigError(f"denominator must be 'successor' or 'all', got {denominator!r}")
    if not len(ds):
        raise DataError("dataset is empty")
    lag = int(lag)
    n = len(ds.alphabet)
    pair = np.zeros((n, n))
    ante = np.zeros(n)
    for s in ds.sequences:
        w = s.weight if weighted else 1.0
        ev = np.asarray(s.events, dtype=np.intp)
        if len(ev) > lag:
            np.add.at(pair, (ev[:-lag], ev[lag:]), w)
            np.add.at(ante, ev[:-lag], w)
        if denominator == "all" and len(ev):
            np.add.at(ante, ev[-lag:], w)
    if not pair.any():
        warnings.warn(f"no event pair at lag {lag}; transition rates are all zero", stacklevel=2)
    rates = np.divide(pair, ante[:, None], out=np.zeros_like(pair), where=ante[:, None] > 0)
    for arr in (rates, pair, ante):
        arr.setflags(write=False)
    return TransitionMatrix(ds.alphabet, rates, pair, ante, lag)


def trate_substitution(tm: TransitionMatrix) -> SubstitutionMatrix:
    """Costs ``2 - p(ab) - p(ba)`` with the diagonal forced to zero."""
    p = tm.rates
    cost = 2.0 - (p + p.T)  # sum first so both halves round identically
    np.fill_diagonal(cost, 0.0)
    cost.setflags(write=False)
    return SubstitutionMatrix(tm.alphabet, cost)


def shared_future_substitution(ds: SequenceDataset, lag: int = 1, weighted: bool = True,
                               normalize_max2: bool = True, denominator: str = "successor",
                               tm: TransitionMatrix | None = None) -> SubstitutionMatrix:
    """Chi-square style divergence between lag-``q`` future distributions.

    ``cost(a, b) = sum_c (p(c|a) - p(c|b))**2 / sum_f p(c|f)``, skipping
    futures ``c`` that no event leads to. With ``normalize_max2`` the
    off-diagonal entries are rescaled so that the largest equals 2.
    """
    if tm is None:
        tm = transition_rates(ds, lag=lag, weighted=weighted, denominator=denominator)
    p = tm.rates
    colsum = p.sum(axis=0)
    keep = colsum > 0
    pk = p[:, keep]
    inv = 1.0 / colsum[keep]
    n = p.shape[0]
    cost = np.zeros((n, n))
    for a in range(n):
        diff = pk[a] - pk
        cost[a] = (diff * diff) @ inv
    cost = np.minimum(cost, cost.T)  # exact symmetry; both halves agree up to rounding
    np.fill_diagonal(cost, 0.0)
    if normalize_max2 and n >= 2:
        top = cost[~np.eye(n, dtype=bool)].max()
        if top > 0:
            cost = cost / top * 2.0
            cost = np.minimum(cost, cost.T)
    cost.setflags(write=False)
    return SubstitutionMatrix(tm.alphabet, cost)


def localized_indel_cost(scheme: CostScheme, inserted: str, left: str | None,
                         right: str | None) -> float:
    """Cost of inserting ``inserted`` between ``left`` and ``right``.

    ``None`` marks a sequence boundary; the missing neighbour then counts as
    maximally dissimilar (``gamma_max``).
    """
    model = scheme.indel
    if model.kind != "localized":
        return model.c
    sub = scheme.substitution
    gmax = sub.gamma_max
    g_left = gmax if left is None else sub[left, inserted]
    g_right = gmax if right is None else sub[right, inserted]
    return model.e * gmax + model.g * (g_left + g_right) / 2


def build_cost_scheme(measure: str, ds: SequenceDataset, lag: int = 1, e: float | None = None,
                      g: float | None = None, weighted: bool = True, normalize_max2: bool = True,
                      denominator: str = "successor",
                      substitution: SubstitutionMatrix | None = None) -> CostScheme:
    """Construct one of the named preset schemes from ``ds``.

    ``substitution`` lets callers reuse a cached data-driven matrix, e.g.
    across an (e, g) sweep.
    """
    if measure not in PRESETS:
        raise ConfigError(f"unknown measure {measure!r}; expected one of {', '.join(PRESETS)}")
    options = {"lag": lag, "weighted": weighted, "normalize_max2": normalize_max2,
               "denominator": denominator}
    if measure == "OMlev":
        return constant_costs(ds.alphabet, 2.0, 1.0, name="OMlev")
    if substitution is None:
        if measure.endswith("tr"):
            substitution = trate_substitution(
                transition_rates(ds, lag=lag, weighted=weighted, denominator=denominator))
        else:
            substitution = shared_future_substitution(
                ds, lag=lag, weighted=weighted, normalize_max2=normalize_max2,
                denominator=denominator)
    if measure.startswith("LOM"):
        if e is None or g is None:
            raise ConfigError(f"{measure} requires both e and g")
        indel = IndelModel.localized(e, g)
        options.update(e=float(e), g=float(g))
    else:
        indel = IndelModel.constant(1.0)
    return _checked(CostScheme(measure, substitution, indel, options))


def write_substitution_csv(sub: SubstitutionMatrix, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["", *sub.alphabet.codes])
        for code, row in zip(sub.alphabet.codes, sub.cost):
            writer.writerow([code, *(format(float(v), ".17g") for v in row)])


def read_substitution_csv(path) -> SubstitutionMatrix:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise DataError(f"{path}: empty substitution matrix file")
    codes = rows[0][1:]
    body = rows[1:]
    if len(body) != len(codes) or any(len(r) != len(codes) + 1 for r in body):
        raise DataError(f"{path}: substitution matrix is not square")
    if [r[0] for r in body] != codes:
        raise DataError(f"{path}: row and column codes differ")
    try:
        cost = np.array([[float(v) for v in r[1:]] for r in body], dtype=float).reshape(len(codes), len(codes))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    cost.setflags(write=False)
    return SubstitutionMatrix(EventAlphabet(codes), cost)
