"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import DataError


def check_distances(X, weights=None):
    """Return ``(square, weights)`` from a square array or a DissimilarityMatrix.

    Explicit ``weights`` override those carried by a DissimilarityMatrix.
    """
    from .align import DissimilarityMatrix

    if isinstance(X, DissimilarityMatrix):
        D = X.square()
        if weights is None:
            weights = X.weights
    else:
        D = check_array(X, dtype=np.float64, ensure_min_samples=1, ensure_min_features=1)
        if D.shape[0] != D.shape[1]:
            raise DataError(f"precomputed distances must be square, got shape {D.shape}")
        if not np.array_equal(D, D.T):
            raise DataError("precomputed distances must be symmetric")
        if np.any(np.diag(D) != 0):
            raise DataError("precomputed distances must have a zero diagonal")
        if np.any(D < 0):
            raise DataError("precomputed distances must be nonnegative")
    return D, check_weights(weights, D.shape[0])


def check_weights(weights, n: int) -> np.ndarray:
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != n:
        raise DataError(f"{w.shape[0]} weights for {n} cases")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DataError("weights must be finite and nonnegative")
    return w


def check_labels(labels, n: int | None = None) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1)
    if n is not None and labels.shape[0] != n:
        raise DataError(f"{labels.shape[0]} labels for {n} cases")
    return labels
