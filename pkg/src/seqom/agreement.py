"""Agreement between partitions and correlation between dissimilarity matrices.

Pair counts generalize to case weights: a group of total weight W whose
members have weights w_i holds (W**2 - sum(w_i**2)) / 2 pairs, which is the
ordinary pair count when every weight is 1.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import rankdata

from ._validation import check_labels, check_weights
from .exceptions import ConfigError, DataError, DegenerateError

__all__ = [
    "ContingencyTable",
    "PairCounts",
    "MantelResult",
    "contingency",
    "pair_counts",
    "ari",
    "ami",
    "fms",
    "agreement_report",
    "expected_mutual_information",
    "mantel_test",
]


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    """Weighted cross-tabulation of two labelings.

    ``squares`` holds the per-cell sum of squared case weights, needed for
    exact weighted pair counts.
    """

    counts: np.ndarray
    squares: np.ndarray
    row_labels: tuple = ()
    col_labels: tuple = ()

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def shape(self):
        return self.counts.shape


@dataclass(frozen=True)
class PairCounts:
    n11: float
    n10: float
    n01: float
    n00: float

    @property
    def total(self) -> float:
        return self.n11 + self.n10 + self.n01 + self.n00


@dataclass(frozen=True)
class MantelResult:
    r: float
    permutations: int
    p_value: float
    seed: int
    method: str = "pearson"

    def as_dict(self):
        return {"r": self.r, "permutations": self.permutations, "p_value": self.p_value,
                "seed": self.seed}


def contingency(x, y, weights=None) -> ContingencyTable:
    """Cross-tabulate labelings ``x`` (rows) and ``y`` (columns)."""
    x = check_labels(x)
    y = check_labels(y)
    if len(x) != len(y):
        raise DataError(f"labelings differ in length: {len(x)} vs {len(y)}")
    w = check_weights(weights, len(x))
    rows, xi = np.unique(x, return_inverse=True)
    cols, yi = np.unique(y, return_inverse=True)
    counts = np.zeros((len(rows), len(cols)))
    squares = np.zeros_like(counts)
    np.add.at(counts, (xi, yi), w)
    np.add.at(squares, (xi, yi), w * w)
    keep_r = counts.sum(axis=1) > 0
    keep_c = counts.sum(axis=0) > 0
    counts = counts[keep_r][:, keep_c]
    squares = squares[keep_r][:, keep_c]
    return ContingencyTable(counts, squares, tuple(rows[keep_r].tolist()),
                            tuple(cols[keep_c].tolist()))


def pair_counts(ct: ContingencyTable) -> PairCounts:
    """Weighted pair classification; ``n10`` = split by x, joined by y."""
    c, q = ct.counts, ct.squares
    same_both = (np.sum(c * c) - np.sum(q)) / 2
    same_x = (np.sum(ct.row_sums ** 2) - np.sum(q)) / 2
    same_y = (np.sum(ct.col_sums ** 2) - np.sum(q)) / 2
    all_pairs = (ct.total ** 2 - np.sum(q)) / 2
    n11 = float(same_both)
    n01 = float(same_x - same_both)
    n10 = float(same_y - same_both)
    n00 = float(all_pairs - same_x - same_y + same_both)
    return PairCounts(n11, n10, n01, n00)


def _identical(ct: ContingencyTable) -> bool:
    """True when every row and every column has exactly one nonzero cell."""
    nz = ct.counts > 0
    return bool(np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1))


def _require_nonempty(ct: ContingencyTable):
    if ct.counts.size == 0 or not ct.total > 0:
        raise DataError("contingency table is empty")


def ari(ct: ContingencyTable) -> float:
    """Adjusted Rand index from pair counts.

    A 0/0 value is 1 for identical partitions and 0 otherwise.
    """
    _require_nonempty(ct)
    p = pair_counts(ct)
    num = 2.0 * (p.n00 * p.n11 - p.n01 * p.n10)
    den = (p.n00 + p.n01) * (p.n01 + p.n11) + (p.n00 + p.n10) * (p.n10 + p.n11)
    if den == 0:
        return 1.0 if _identical(ct) else 0.0
    return float(num / den)


def fms(ct: ContingencyTable) -> float:
    _require_nonempty(ct)
    p = pair_counts(ct)
    if p.n11 <= 0:
        return 0.0
    return float(math.sqrt(p.n11 / (p.n11 + p.n10) * p.n11 / (p.n11 + p.n01)))


def _entropy(sums: np.ndarray, total: float) -> float:
    p = sums[sums > 0] / total
    return float(-np.sum(p * np.log(p)))


def _mutual_information(ct: ContingencyTable) -> float:
    c = ct.counts
    total = ct.total
    a, b = ct.row_sums, ct.col_sums
    i, j = np.nonzero(c)
    nij = c[i, j]
    return float(np.sum(nij / total * np.log(total * nij / (a[i] * b[j]))))


def expected_mutual_information(a, b) -> float:
    """Expected mutual information under random relabeling (hypergeometric model).

    ``a`` and ``b`` are integer row and column totals of the same grand total.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n = int(a.sum())
    if n != int(b.sum()):
        raise DataError("row and column totals differ")
    if n <= 1:
        return 0.0
    lg = gammaln(np.arange(n + 2, dtype=float))  # lg[k] = log((k-1)!)
    emi = 0.0
    for ai in a.tolist():
        for bj in b.tolist():
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if hi < lo:
                continue
            nij = np.arange(lo, hi + 1)
            term = nij / n * (np.log(n * nij) - math.log(ai * bj))
            logp = (lg[ai + 1] + lg[bj + 1] + lg[n - ai + 1] + lg[n - bj + 1] - lg[n + 1]
                    - lg[nij + 1] - lg[ai - nij + 1] - lg[bj - nij + 1] - lg[n - ai - bj + nij + 1])
            emi += float(np.sum(term * np.exp(logp)))
    return emi


def ami(ct: ContingencyTable, exact: bool = False) -> float:
    """Adjusted mutual information with the ``max`` entropy normalizer.

    The expected term needs integer counts. Non-integer weighted totals are
    rounded with a warning, or rejected when ``exact`` is set.
    """
    _require_nonempty(ct)
    a, b = ct.row_sums, ct.col_sums
    ai, bi = np.rint(a), np.rint(b)
    if not (np.allclose(a, ai, rtol=0, atol=1e-9) and np.allclose(b, bi, rtol=0, atol=1e-9)):
        if exact:
            raise DataError("exact expected mutual information needs integer counts")
        warnings.warn("weighted counts rounded to integers for the expected mutual information",
                      RuntimeWarning, stacklevel=2)
    mi = _mutual_information(ct)
    emi = expected_mutual_information(ai.astype(np.int64), bi.astype(np.int64))
    hmax = max(_entropy(a, ct.total), _entropy(b, ct.total))
    den = hmax - emi
    if abs(den) < 1e-15:
        return 1.0 if _identical(ct) else 0.0
    return float((mi - emi) / den)


def agreement_report(x, y, weights=None, exact: bool = False) -> dict:
    ct = contingency(x, y, weights)
    r, s = ct.shape
    return {"ari": ari(ct), "ami": ami(ct, exact=exact), "fms": fms(ct), "n": len(check_labels(x)),
            "r": int(r), "s": int(s)}


# ---------------------------------------------------------------------------
# Mantel test
# ---------------------------------------------------------------------------

def _centered(v: np.ndarray) -> tuple[np.ndarray, float]:
    c = v - v.mean()
    ss = float(np.dot(c, c))
    if not ss > 0:
        raise DegenerateError("constant matrix: correlation is undefined")
    return c, ss


def mantel_test(m1, m2, permutations: int = 999, seed: int = 0, method: str = "pearson",
                batch: int = 64) -> MantelResult:
    """Permutation test of the correlation between two dissimilarity matrices.

    Each permutation relabels the cases of ``m2`` (rows and columns jointly)
    using a stream derived from ``(seed, permutation index)``. The p-value
    is two-sided: ``(1 + #{|r_perm| >= |r|}) / (permutations + 1)``.
    """
    if m1.labels != m2.labels:
        raise DataError("matrices must share labels in the same order")
    if int(permutations) != permutations or permutations < 1:
        raise ConfigError(f"permutations must be a positive integer, got {permutations!r}")
    if method not in ("pearson", "spearman"):
        raise ConfigError(f"method must be 'pearson' or 'spearman', got {method!r}")
    n = m1.n
    if n < 3:
        raise DegenerateError("Mantel test needs at least 3 cases")
    v1, v2 = m1.values, m2.values
    if method == "spearman":
        v1, v2 = rankdata(v1), rankdata(v2)
    c1, ss1 = _centered(np.asarray(v1, dtype=float))
    c2, ss2 = _centered(np.asarray(v2, dtype=float))
    # sqrt(ss1 * ss2) rather than sqrt(ss1) * sqrt(ss2): identical inputs give exactly 1
    scale = math.sqrt(ss1 * ss2)
    r_obs = float(np.clip(np.dot(c1, c2) / scale, -1.0, 1.0))

    sq2 = np.zeros((n, n))
    iu, ju = np.triu_indices(n, 1)
    sq2[iu, ju] = c2
    sq2[ju, iu] = c2
    hits = 0
    permutations = int(permutations)
    for start in range(0, permutations, batch):
        stop = min(start + batch, permutations)
        perms = np.stack([np.random.default_rng([int(seed), b]).permutation(n)
                          for b in range(start, stop)])
        permuted = sq2[perms[:, iu], perms[:, ju]]
        r_perm = np.clip(permuted @ c1 / scale, -1.0, 1.0)
        hits += int(np.count_nonzero(np.abs(r_perm) >= abs(r_obs)))
    p = (1 + hits) / (permutations + 1)
    return MantelResult(r_obs, permutations, p, int(seed), method)
