"""Optimal-matching distances and pairwise dissimilarity matrices.

Distances are computed with the Needleman-Wunsch recurrence over a
substitution matrix and per-position indel costs. Localized indel costs use
the neighbours of the element inside its own sequence, so the recurrence
stays O(len(x) * len(y)) and the distance stays symmetric.

Condensed storage follows :func:`scipy.spatial.distance.squareform`: pairs
(i, j) with i < j in row-major order, which is the lower triangle read
column by column.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .costs import CostScheme, build_cost_scheme
from .exceptions import ConfigError, DataError
from .sequences import EventSequence, SequenceDataset, distinct_sequences, from_event_lists

__all__ = [
    "DissimilarityMatrix",
    "OptimalMatching",
    "om_distance",
    "pairwise_matrix",
    "cross_distances",
    "expand_condensed",
    "indel_costs",
    "write_matrix",
    "read_matrix",
]


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _om_dp(x, y, sub, del_x, ins_y, prev, cur):
    m = y.shape[0]
    prev[0] = 0.0
    for j in range(1, m + 1):
        prev[j] = prev[j - 1] + ins_y[j - 1]
    for i in range(1, x.shape[0] + 1):
        xi = x[i - 1]
        dcost = del_x[i - 1]
        cur[0] = prev[0] + dcost
        for j in range(1, m + 1):
            best = prev[j - 1] + sub[xi, y[j - 1]]
            alt = prev[j] + dcost
            if alt < best:
                best = alt
            alt = cur[j - 1] + ins_y[j - 1]
            if alt < best:
                best = alt
            cur[j] = best
        for j in range(m + 1):
            prev[j] = cur[j]
    return prev[m]


@njit(cache=True, nogil=True)
def _fill_rows(flat, offsets, indel, sub, row_start, row_stop, out, out_start, maxlen_norm):
    n = offsets.shape[0] - 1
    width = 0
    for i in range(n):
        width = max(width, offsets[i + 1] - offsets[i])
    prev = np.empty(width + 1)
    cur = np.empty(width + 1)
    k = out_start
    for i in range(row_start, row_stop):
        a0, a1 = offsets[i], offsets[i + 1]
        for j in range(i + 1, n):
            b0, b1 = offsets[j], offsets[j + 1]
            d = _om_dp(flat[a0:a1], flat[b0:b1], sub, indel[a0:a1], indel[b0:b1], prev, cur)
            if maxlen_norm:
                d = d / max(a1 - a0, b1 - b0)
            out[k] = d
            k += 1


@njit(cache=True, nogil=True)
def _fill_cross(flat_a, off_a, ind_a, flat_b, off_b, ind_b, sub, row_start, row_stop, out,
                maxlen_norm):
    width = 0
    for j in range(off_b.shape[0] - 1):
        width = max(width, off_b[j + 1] - off_b[j])
    prev = np.empty(width + 1)
    cur = np.empty(width + 1)
    for i in range(row_start, row_stop):
        a0, a1 = off_a[i], off_a[i + 1]
        for j in range(off_b.shape[0] - 1):
            b0, b1 = off_b[j], off_b[j + 1]
            d = _om_dp(flat_a[a0:a1], flat_b[b0:b1], sub, ind_a[a0:a1], ind_b[b0:b1], prev, cur)
            if maxlen_norm:
                d = d / max(a1 - a0, b1 - b0)
            out[i, j] = d


# ---------------------------------------------------------------------------
# sequence packing
# ---------------------------------------------------------------------------

def _to_indices(seq, scheme: CostScheme) -> np.ndarray:
    n_codes = len(scheme.alphabet)
    if isinstance(seq, EventSequence):
        arr = np.asarray(seq.events, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= n_codes):
            raise DataError(f"case {seq.case_id!r}: event outside scheme alphabet")
        return arr
    index = scheme.alphabet.index
    try:
        return np.array([index[c] for c in seq], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"event {exc.args[0]!r} outside scheme alphabet") from None


def indel_costs(events: np.ndarray, scheme: CostScheme) -> np.ndarray:
    """Per-position indel cost of each element of one packed sequence."""
    model = scheme.indel
    if model.kind != "localized":
        return np.full(len(events), model.c)
    sub = scheme.substitution.cost
    gmax = scheme.substitution.gamma_max
    gl = np.full(len(events), gmax)
    gr = np.full(len(events), gmax)
    gl[1:] = sub[events[:-1], events[1:]]
    gr[:-1] = sub[events[1:], events[:-1]]
    return model.e * gmax + model.g * (gl + gr) / 2


def _pack(seqs, scheme: CostScheme):
    arrays = [_to_indices(s, scheme) for s in seqs]
    for a in arrays:
        if a.size == 0:
            raise DataError("zero-length sequence")
    offsets = np.zeros(len(arrays) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(a) for a in arrays])
    flat = np.concatenate(arrays) if arrays else np.zeros(0, dtype=np.int64)
    indel = (np.concatenate([indel_costs(a, scheme) for a in arrays])
             if arrays else np.zeros(0))
    return flat, offsets, indel


def _check_normalize(normalize):
    if normalize not in ("none", "maxlen"):
        raise ConfigError(f"normalize must be 'none' or 'maxlen', got {normalize!r}")
    return normalize == "maxlen"


def _n_threads(threads):
    if threads is None:
        return os.cpu_count() or 1
    if int(threads) < 1:
        raise ConfigError(f"threads must be positive, got {threads!r}")
    return int(threads)


def om_distance(x, y, scheme: CostScheme, normalize: str = "none") -> float:
    """Minimum total substitution and indel cost turning ``x`` into ``y``.

    ``x`` and ``y`` are :class:`EventSequence` objects whose indices refer to
    ``scheme.alphabet`` or plain sequences of event codes.

    >>> from seqom.costs import constant_costs
    >>> from seqom.sequences import EventAlphabet
    >>> om_distance("ABCD", "ACB", constant_costs(EventAlphabet("ABCD"), 2, 1))
    3.0
    """
    maxlen = _check_normalize(normalize)
    flat, offsets, indel = _pack([x, y], scheme)
    sub = np.ascontiguousarray(scheme.substitution.cost, dtype=np.float64)
    out = np.empty(1)
    _fill_rows(flat, offsets, indel, sub, 0, 1, out, 0, maxlen)
    return float(out[0])


def _row_blocks(n: int, parts: int) -> list[tuple[int, int]]:
    """Split rows 0..n-1 into contiguous blocks with similar pair counts."""
    if n < 2:
        return []
    total = n * (n - 1) // 2
    parts = max(1, min(parts, n - 1))
    starts = np.arange(n)
    cum = starts * n - starts * (starts + 1) // 2  # condensed offset of row i
    bounds = [0]
    for p in range(1, parts):
        bounds.append(int(np.searchsorted(cum, total * p / parts)))
    bounds.append(n - 1)
    bounds = sorted(set(bounds))
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _condensed_fill(seqs, scheme: CostScheme, threads, maxlen: bool) -> np.ndarray:
    n = len(seqs)
    out = np.zeros(n * (n - 1) // 2)
    if n < 2:
        return out
    flat, offsets, indel = _pack(seqs, scheme)
    sub = np.ascontiguousarray(scheme.substitution.cost, dtype=np.float64)
    workers = _n_threads(threads)
    blocks = _row_blocks(n, workers * 4 if workers > 1 else 1)

    def run(block):
        a, b = block
        start = a * n - a * (a + 1) // 2
        _fill_rows(flat, offsets, indel, sub, a, b, out, start, maxlen)

    if workers == 1:
        for block in blocks:
            run(block)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, blocks))
    return out


def cross_distances(xs, ys, scheme: CostScheme, threads=None, normalize: str = "none") -> np.ndarray:
    """Rectangular matrix of distances between two lists of sequences."""
    maxlen = _check_normalize(normalize)
    fa, oa, ia = _pack(xs, scheme)
    fb, ob, ib = _pack(ys, scheme)
    sub = np.ascontiguousarray(scheme.substitution.cost, dtype=np.float64)
    out = np.zeros((len(xs), len(ys)))
    workers = _n_threads(threads)
    edges = np.linspace(0, len(xs), min(workers * 4, max(len(xs), 1)) + 1).astype(int)
    blocks = [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]

    def run(block):
        _fill_cross(fa, oa, ia, fb, ob, ib, sub, block[0], block[1], out, maxlen)

    if workers == 1:
        for block in blocks:
            run(block)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, blocks))
    return out


# ---------------------------------------------------------------------------
# dissimilarity matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DissimilarityMatrix:
    """Symmetric zero-diagonal matrix stored as its condensed triangle."""

    labels: tuple[str, ...]
    weights: np.ndarray
    values: np.ndarray
    scheme_name: str = ""

    def __post_init__(self):
        labels = tuple(str(l) for l in self.labels)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float).reshape(-1)
        n = len(labels)
        if len(weights) != n:
            raise DataError(f"{len(weights)} weights for {n} labels")
        if len(values) != n * (n - 1) // 2:
            raise DataError(f"condensed length mismatch: {len(values)} values for n={n}")
        if values.size and (not np.all(np.isfinite(values)) or values.min() < 0):
            raise DataError("dissimilarities must be finite and nonnegative")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise DataError("weights must be finite and nonnegative")
        weights.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return len(self.labels)

    def square(self) -> np.ndarray:
        from scipy.spatial.distance import squareform
        if self.n == 1:
            return np.zeros((1, 1))
        return squareform(self.values, checks=False)

    @classmethod
    def from_square(cls, square, labels=None, weights=None, scheme_name: str = ""):
        from scipy.spatial.distance import squareform
        square = np.asarray(square, dtype=float)
        n = square.shape[0]
        if square.shape != (n, n) or not np.array_equal(square, square.T):
            raise DataError("square dissimilarity matrix must be symmetric")
        if np.any(np.diag(square) != 0):
            raise DataError("square dissimilarity matrix must have a zero diagonal")
        labels = labels if labels is not None else [str(i) for i in range(n)]
        weights = weights if weights is not None else np.ones(n)
        values = squareform(square, checks=False) if n > 1 else np.zeros(0)
        return cls(tuple(labels), weights, values, scheme_name)

    def __getitem__(self, ij) -> float:
        i, j = ij
        if i == j:
            return 0.0
        if i > j:
            i, j = j, i
        n = self.n
        return float(self.values[i * n - i * (i + 1) // 2 + j - i - 1])

    def __eq__(self, other):
        if not isinstance(other, DissimilarityMatrix):
            return NotImplemented
        return (self.labels == other.labels and self.scheme_name == other.scheme_name
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.values, other.values))

    __hash__ = None


def expand_condensed(unique_values: np.ndarray, case_to_unique) -> np.ndarray:
    """Condensed case-level triangle from a triangle over distinct sequences."""
    case_to_unique = np.asarray(case_to_unique, dtype=np.intp)
    m = int(case_to_unique.max()) + 1 if len(case_to_unique) else 0
    if len(unique_values) != m * (m - 1) // 2:
        raise DataError("condensed length mismatch for the distinct-sequence matrix")
    usq = np.zeros((m, m))
    if m > 1:
        iu = np.triu_indices(m, 1)
        usq[iu] = unique_values
        usq[iu[1], iu[0]] = unique_values
    rows, cols = np.triu_indices(len(case_to_unique), 1)
    return usq[case_to_unique[rows], case_to_unique[cols]]


def pairwise_matrix(ds: SequenceDataset, scheme: CostScheme, dedupe: bool = True,
                    threads=None, normalize: str = "none") -> DissimilarityMatrix:
    """Fill the full pairwise dissimilarity matrix of ``ds``.

    With ``dedupe`` each distinct pair of event lists is aligned once and the
    result is copied to every case pair sharing it; output bytes do not
    depend on ``dedupe`` or ``threads``.
    """
    maxlen = _check_normalize(normalize)
    if not len(ds):
        raise DataError("dataset is empty")
    if ds.alphabet != scheme.alphabet:
        seqs = [ds.decoded(i) for i in range(len(ds))]
    else:
        seqs = list(ds.sequences)
    if dedupe:
        uniques, _, case_to_unique = distinct_sequences(ds)
        first = {}
        for i, u in enumerate(case_to_unique.tolist()):
            first.setdefault(u, i)
        reps = [seqs[first[u]] for u in range(len(uniques))]
        ucond = _condensed_fill(reps, scheme, threads, maxlen)
        values = expand_condensed(ucond, case_to_unique)
    else:
        values = _condensed_fill(seqs, scheme, threads, maxlen)
    return DissimilarityMatrix(tuple(ds.case_ids), ds.weights, values, scheme.name)


# ---------------------------------------------------------------------------
# file io
# ---------------------------------------------------------------------------

def _values_block(values: np.ndarray) -> str:
    return "".join(format(v, ".17g") + "\n" for v in values.tolist())


def write_matrix(m: DissimilarityMatrix, path) -> None:
    """Write ``m`` as text, or as a binary ``.npz`` container by suffix."""
    path = Path(path)
    if path.suffix == ".npz":
        with path.open("wb") as handle:
            np.savez(handle, labels=np.array(m.labels, dtype=str), weights=m.weights,
                     values=m.values, scheme=np.array(m.scheme_name),
                     sha256=np.array(hashlib.sha256(m.values.tobytes()).hexdigest()))
        return
    body = _values_block(m.values)
    head = [
        f"n={m.n}",
        f"scheme={m.scheme_name}",
        "labels=" + json.dumps(list(m.labels)),
        "weights=" + json.dumps([format(w, ".17g") for w in m.weights.tolist()]),
        "sha256=" + hashlib.sha256(body.encode()).hexdigest(),
    ]
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(head) + "\n")
        handle.write(body)


def _header_value(line: str, key: str) -> str:
    prefix = key + "="
    if not line.startswith(prefix):
        raise DataError(f"matrix file: expected '{prefix}...' header, got {line[:40]!r}")
    return line[len(prefix):]


def read_matrix(path) -> DissimilarityMatrix:
    path = Path(path)
    try:
        if path.suffix == ".npz":
            with np.load(path, allow_pickle=False) as z:
                values = z["values"]
                if hashlib.sha256(values.tobytes()).hexdigest() != str(z["sha256"]):
                    raise DataError("matrix file: checksum failure")
                return DissimilarityMatrix(tuple(z["labels"].tolist()), z["weights"], values,
                                           str(z["scheme"]))
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    lines = text.split("\n", 5)
    if len(lines) < 5:
        raise DataError("matrix file: truncated header")
    try:
        n = int(_header_value(lines[0], "n"))
        scheme = _header_value(lines[1], "scheme")
        labels = json.loads(_header_value(lines[2], "labels"))
        weights = [float(w) for w in json.loads(_header_value(lines[3], "weights"))]
    except (ValueError, TypeError) as exc:
        raise DataError(f"matrix file: malformed header ({exc})") from None
    digest = _header_value(lines[4], "sha256")
    body = lines[5] if len(lines) > 5 else ""
    if len(labels) != n or len(weights) != n:
        raise DataError(f"matrix file: label/weight count does not match n={n}")
    tokens = body.split()
    expected = n * (n - 1) // 2
    if len(tokens) != expected:
        raise DataError(f"condensed length mismatch: expected {expected} values, found {len(tokens)}")
    if hashlib.sha256(body.encode()).hexdigest() != digest:
        raise DataError("matrix file: checksum failure")
    values = np.array(tokens, dtype=float) if tokens else np.zeros(0)
    return DissimilarityMatrix(tuple(labels), np.array(weights), values, scheme)


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------

def _as_dataset(X, sample_weight=None) -> SequenceDataset:
    if isinstance(X, SequenceDataset):
        if sample_weight is not None:
            raise ConfigError("sample_weight is taken from the dataset; pass a list of sequences instead")
        return X
    lists = [list(s) for s in X]
    return from_event_lists(lists, weights=None if sample_weight is None else list(sample_weight))


class OptimalMatching(TransformerMixin, BaseEstimator):
    """Learn an optimal-matching cost scheme and compute distances.

    ``fit`` derives the substitution costs from the training sequences (for
    the data-driven measures). ``transform`` returns the distances from each
    input sequence to every training sequence, which is the layout expected
    by estimators taking a precomputed distance matrix.

    Parameters
    ----------
    measure : {"OMlev", "OMtr", "OMsf", "LOMtr", "LOMsf"}
    lag : int
        Position lag for transition-based costs.
    e, g : float, optional
        Localized indel parameters, required by the LOM measures.
    weighted : bool
        Weight transition counts by case weight.
    normalize_max2 : bool
        Rescale shared-future costs to a maximum of 2.
    denominator : {"successor", "all"}
        Which occurrences count toward a transition denominator.
    normalize : {"none", "maxlen"}
        Divide each distance by the longer sequence length.
    dedupe : bool
        Align each distinct pair of sequences once.
    threads : int, optional
        Worker threads for matrix fills; defaults to the CPU count.
    """

    def __init__(self, measure="OMlev", lag=1, e=None, g=None, weighted=True,
                 normalize_max2=True, denominator="successor", normalize="none",
                 dedupe=True, threads=None):
        self.measure = measure
        self.lag = lag
        self.e = e
        self.g = g
        self.weighted = weighted
        self.normalize_max2 = normalize_max2
        self.denominator = denominator
        self.normalize = normalize
        self.dedupe = dedupe
        self.threads = threads

    def fit(self, X, y=None, sample_weight=None):
        ds = _as_dataset(X, sample_weight)
        self.scheme_ = build_cost_scheme(
            self.measure, ds, lag=self.lag, e=self.e, g=self.g, weighted=self.weighted,
            normalize_max2=self.normalize_max2, denominator=self.denominator)
        self.train_ = ds
        self.n_features_in_ = len(ds)
        return self

    def _decoded(self, ds: SequenceDataset):
        return [ds.decoded(i) for i in range(len(ds))]

    def transform(self, X):
        check_is_fitted(self, "scheme_")
        ds = _as_dataset(X)
        return cross_distances(self._decoded(ds), self._decoded(self.train_), self.scheme_,
                               threads=self.threads, normalize=self.normalize)

    def fit_transform(self, X, y=None, sample_weight=None):
        self.fit(X, sample_weight=sample_weight)
        return self.pairwise().square()

    def pairwise(self, X=None) -> DissimilarityMatrix:
        """Condensed dissimilarity matrix of ``X`` (default: training data)."""
        check_is_fitted(self, "scheme_")
        ds = self.train_ if X is None else _as_dataset(X)
        return pairwise_matrix(ds, self.scheme_, dedupe=self.dedupe, threads=self.threads,
                               normalize=self.normalize)
