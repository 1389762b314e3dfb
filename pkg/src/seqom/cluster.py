"""Weighted k-medoids clustering and partition quality indices."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_distances, check_labels
from .exceptions import ConfigError, DataError, DegenerateError
from .sequences import SequenceDataset

__all__ = [
    "ClusterAssignment",
    "QualityIndices",
    "QualityTable",
    "WeightedKMedoids",
    "weighted_k_medoids",
    "cluster_quality",
    "quality_over_k",
    "representative_sequences",
]

QUALITY_NAMES = ("aswW", "hg", "pbc", "hc")


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    medoids: np.ndarray
    objective: float
    n_iter: int = 0

    @property
    def k(self) -> int:
        return len(self.medoids)

    def expand(self, case_to_unique, weights=None) -> "ClusterAssignment":
        """Map an assignment over distinct sequences back to cases.

        Each medoid becomes the first case holding the medoid sequence.
        """
        case_to_unique = np.asarray(case_to_unique)
        first = {}
        for i, u in enumerate(case_to_unique.tolist()):
            first.setdefault(u, i)
        medoids = np.array([first[int(m)] for m in self.medoids], dtype=np.intp)
        return ClusterAssignment(self.labels[case_to_unique], medoids, self.objective, self.n_iter)


@dataclass(frozen=True)
class QualityIndices:
    aswW: float
    hg: float
    pbc: float
    hc: float

    def as_tuple(self):
        return (self.aswW, self.hg, self.pbc, self.hc)


# ---------------------------------------------------------------------------
# k-medoids
# ---------------------------------------------------------------------------

def _assign(D, medoids):
    """Labels by nearest medoid; ``medoids`` sorted so ties go to the lowest index."""
    labels = np.argmin(D[:, medoids], axis=1)
    labels[medoids] = np.arange(len(medoids))
    return labels


def _objective(D, w, medoids, labels) -> float:
    return float(np.dot(w, D[np.arange(D.shape[0]), medoids[labels]]))


def _build(D, w, k):
    n = D.shape[0]
    first = int(np.argmin(w @ D))
    medoids = [first]
    nearest = D[:, first].copy()
    is_med = np.zeros(n, dtype=bool)
    is_med[first] = True
    while len(medoids) < k:
        gain = w @ np.maximum(nearest[:, None] - D, 0.0)
        gain[is_med] = -np.inf
        c = int(np.argmax(gain))
        medoids.append(c)
        is_med[c] = True
        nearest = np.minimum(nearest, D[:, c])
    return np.array(medoids, dtype=np.intp)


def _swap(D, w, medoids, max_iter):
    n = D.shape[0]
    k = len(medoids)
    medoids = np.sort(medoids)
    labels = _assign(D, medoids)
    obj = _objective(D, w, medoids, labels)
    n_iter = 0
    while n_iter < max_iter:
        dm = D[:, medoids]
        order = np.argsort(dm, axis=1, kind="stable")
        rows = np.arange(n)
        near = order[:, 0]
        d1 = dm[rows, near]
        d2 = dm[rows, order[:, 1]] if k > 1 else np.full(n, np.inf)
        m1 = np.minimum(d1[:, None], D)
        t1 = w @ (m1 - d1[:, None])
        gain_if_removed = w[:, None] * (np.minimum(d2[:, None], D) - m1)
        onehot = np.zeros((k, n))
        onehot[near, rows] = 1.0
        delta = t1[None, :] + onehot @ gain_if_removed
        delta[:, medoids] = np.inf
        pos = int(np.argmin(delta))
        i, h = divmod(pos, n)
        if not delta[i, h] < -1e-12 * obj:
            break
        trial = medoids.copy()
        trial[i] = h
        trial.sort()
        trial_labels = _assign(D, trial)
        trial_obj = _objective(D, w, trial, trial_labels)
        if not trial_obj < obj:
            break
        medoids, labels, obj = trial, trial_labels, trial_obj
        n_iter += 1
    return medoids, labels, obj, n_iter


def weighted_k_medoids(m, k: int, seed: int = 0, init: str = "build", weights=None,
                       max_iter: int = 1000) -> ClusterAssignment:
    """Partition around medoids minimizing the weighted distance to medoids.

    Parameters
    ----------
    m : DissimilarityMatrix or array of shape (n, n)
    k : int
        Number of clusters, ``1 <= k <= n``.
    seed : int
        Seed for ``init="random"``; the stream is derived from ``(seed, k)``.
    init : {"build", "random"}
        Starting medoids, refined by SWAP until no single exchange helps.
    """
    D, w = check_distances(m, weights)
    n = D.shape[0]
    if int(k) != k or not 1 <= k <= n:
        raise ConfigError(f"k must be an integer in [1, {n}], got {k!r}")
    k = int(k)
    if not w.sum() > 0:
        raise DataError("weights must have a positive total")
    if init == "build":
        start = _build(D, w, k)
    elif init == "random":
        rng = np.random.default_rng([int(seed), k])
        start = rng.choice(n, size=k, replace=False)
    else:
        raise ConfigError(f"init must be 'build' or 'random', got {init!r}")
    medoids, labels, obj, n_iter = _swap(D, w, start, max_iter)
    return ClusterAssignment(labels, medoids, obj, n_iter)


class WeightedKMedoids(ClusterMixin, BaseEstimator):
    """k-medoids on a precomputed dissimilarity matrix with case weights.

    ``fit`` accepts a square distance array or a DissimilarityMatrix; in the
    latter case its weights are used unless ``sample_weight`` is given.
    ``predict`` takes distances from new cases to the training cases.
    """

    def __init__(self, n_clusters=8, init="build", random_state=0, max_iter=1000):
        self.n_clusters = n_clusters
        self.init = init
        self.random_state = random_state
        self.max_iter = max_iter

    def fit(self, X, y=None, sample_weight=None):
        a = weighted_k_medoids(X, self.n_clusters, seed=self.random_state, init=self.init,
                               weights=sample_weight, max_iter=self.max_iter)
        self.labels_ = a.labels
        self.medoid_indices_ = a.medoids
        self.objective_ = a.objective
        self.n_iter_ = a.n_iter
        self.assignment_ = a
        return self

    def predict(self, X):
        check_is_fitted(self, "medoid_indices_")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.labels_):
            raise DataError(f"expected distances to {len(self.labels_)} training cases")
        return np.argmin(X[:, self.medoid_indices_], axis=1)


# ---------------------------------------------------------------------------
# quality indices
# ---------------------------------------------------------------------------

def _silhouette(D, w, labels, k):
    totals = np.bincount(labels, weights=w, minlength=k)
    onehot = np.zeros((len(labels), k))
    onehot[np.arange(len(labels)), labels] = 1.0
    sums = D @ (onehot * w[:, None])  # sums[i, c] = sum_{j in c} w_j d_ij
    rows = np.arange(len(labels))
    own = sums[rows, labels]
    own_w = totals[labels] - w
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(own_w > 0, own / own_w, 0.0)
        means = sums / totals[None, :]
    means[rows, labels] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where((own_w > 0) & (denom > 0), (b - a) / denom, 0.0)
    return float(np.dot(w, s) / w.sum())


def _partial_sum(d_sorted, pw_sorted, target):
    cw = np.cumsum(pw_sorted)
    idx = int(np.searchsorted(cw, target, side="left"))
    idx = min(idx, len(d_sorted) - 1)
    full = float(np.dot(d_sorted[:idx], pw_sorted[:idx]))
    rem = target - (cw[idx - 1] if idx else 0.0)
    return full + max(rem, 0.0) * d_sorted[idx]


def cluster_quality(m, a, weights=None) -> QualityIndices:
    """ASWw, Hubert's gamma, point-biserial correlation and Hubert's C.

    Pairs (i, j) count with weight ``w_i * w_j``. ``a`` is a
    ClusterAssignment or a label array.
    """
    D, w = check_distances(m, weights)
    n = D.shape[0]
    labels = a.labels if isinstance(a, ClusterAssignment) else a
    labels = check_labels(labels, n)
    uniq, labels = np.unique(labels, return_inverse=True)
    k = len(uniq)
    if n < 2 or k < 2:
        raise DegenerateError("quality indices need at least 2 cases and 2 clusters")
    totals = np.bincount(labels, weights=w, minlength=k)
    if np.any(totals <= 0):
        raise DegenerateError("a cluster has zero total weight")

    asw = _silhouette(D, w, labels, k)

    iu, ju = np.triu_indices(n, 1)
    d = D[iu, ju]
    pw = w[iu] * w[ju]
    same = labels[iu] == labels[ju]

    # point-biserial: correlation of distance with the between-cluster indicator
    sw = pw.sum()
    btw = (~same).astype(float)
    md = np.dot(pw, d) / sw
    mb = np.dot(pw, btw) / sw
    cov = np.dot(pw, (d - md) * (btw - mb))
    vd = np.dot(pw, (d - md) ** 2)
    vb = np.dot(pw, (btw - mb) ** 2)
    pbc = float(cov / math.sqrt(vd * vb)) if vd > 0 and vb > 0 else 0.0

    # Hubert's gamma: concordance between distance and between-cluster indicator
    dw, ww = d[same], pw[same]
    db, wb = d[~same], pw[~same]
    order = np.argsort(dw, kind="stable")
    dw_s, cw = dw[order], np.concatenate([[0.0], np.cumsum(ww[order])])
    below = cw[np.searchsorted(dw_s, db, side="left")]
    above = cw[-1] - cw[np.searchsorted(dw_s, db, side="right")]
    conc = float(np.dot(wb, below))
    disc = float(np.dot(wb, above))
    hg = (conc - disc) / (conc + disc) if conc + disc > 0 else 0.0

    # Hubert's C: within-cluster sum against its smallest and largest attainable values
    s_within = float(np.dot(ww, dw))
    target = float(ww.sum())
    order = np.argsort(d, kind="stable")
    s_min = _partial_sum(d[order], pw[order], target)
    s_max = _partial_sum(d[order][::-1], pw[order][::-1], target)
    span = s_max - s_min
    hc = (s_within - s_min) / span if span > 1e-12 * max(abs(s_max), 1e-300) else 0.0

    return QualityIndices(
        aswW=float(np.clip(asw, -1, 1)),
        hg=float(np.clip(hg, -1, 1)),
        pbc=float(np.clip(pbc, -1, 1)),
        hc=float(np.clip(hc, 0, 1)),
    )


@dataclass(frozen=True)
class QualityTable:
    ks: tuple[int, ...]
    indices: tuple[QualityIndices, ...]
    assignments: tuple[ClusterAssignment, ...]

    def values(self, name: str) -> np.ndarray:
        return np.array([getattr(q, name) for q in self.indices])

    def standardized(self, name: str) -> np.ndarray:
        v = self.values(name)
        if len(v) < 2:
            return np.zeros_like(v)
        sd = v.std(ddof=1)
        if not sd > 0:
            return np.zeros_like(v)
        return (v - v.mean()) / sd

    def best_k(self, name: str = "aswW") -> int:
        v = self.values(name)
        pos = int(np.argmin(v) if name == "hc" else np.argmax(v))
        return self.ks[pos]

    def rows(self):
        z = {name: self.standardized(name) for name in QUALITY_NAMES}
        for i, (k, q) in enumerate(zip(self.ks, self.indices)):
            yield {"k": k, **{n: getattr(q, n) for n in QUALITY_NAMES},
                   **{f"{n}_z": float(z[n][i]) for n in QUALITY_NAMES}}


def quality_over_k(m, k_range, seed: int = 0, init: str = "build", weights=None) -> QualityTable:
    """Cluster once per k and report quality indices with z-scores across k."""
    D, w = check_distances(m, weights)
    ks = tuple(int(k) for k in k_range)
    if not ks:
        raise ConfigError("k_range is empty")
    if min(ks) < 2 or max(ks) > D.shape[0]:
        raise ConfigError(f"k_range must lie within [2, {D.shape[0]}]")
    assignments = tuple(weighted_k_medoids(D, k, seed=seed, init=init, weights=w) for k in ks)
    indices = tuple(cluster_quality(D, a, weights=w) for a in assignments)
    return QualityTable(ks, indices, assignments)


def representative_sequences(ds: SequenceDataset, a) -> list[tuple[tuple[str, ...], float]]:
    """Dominant distinct sequence of each cluster and its weighted share.

    Ties go to the sequence whose first case comes first.
    """
    labels = a.labels if isinstance(a, ClusterAssignment) else a
    labels = check_labels(labels, len(ds))
    k = int(labels.max()) + 1 if len(labels) else 0
    out = []
    for c in range(k):
        members = np.flatnonzero(labels == c)
        if not len(members):
            raise DataError(f"cluster {c} is empty")
        agg: dict[tuple[int, ...], list[float]] = {}
        for i in members.tolist():
            s = ds.sequences[i]
            agg.setdefault(s.events, []).append(s.weight)
        totals = {ev: math.fsum(ws) for ev, ws in agg.items()}
        cluster_total = math.fsum(totals.values())
        if not cluster_total > 0:
            raise DegenerateError(f"cluster {c} has zero total weight")
        best = max(totals, key=lambda ev: totals[ev])  # max keeps the first maximal key
        out.append((ds.alphabet.decode(best), totals[best] / cluster_total))
    return out
