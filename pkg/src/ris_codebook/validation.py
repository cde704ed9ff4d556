"""Input validation helpers for the estimator-facing API.

scikit-learn's own check_array rejects complex data, so channel matrices
get their own coercion/validation here.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError


def channel_matrix(X) -> np.ndarray:
    """Coerce user channels to a validated (num_users, M) complex matrix.

    Accepts a 2-D array, a sequence of 1-D arrays, or a sequence of
    channel objects exposing `.coefficients`.
    """
    if hasattr(X, "matrix"):
        X = X.matrix()
    if isinstance(X, np.ndarray):
        arr = X
    else:
        rows = [
            np.asarray(getattr(row, "coefficients", row))
            for row in X
        ]
        if not rows:
            raise ValueError("channel set must contain at least one user")
        arr = np.vstack(rows)
    arr = np.asarray(arr, dtype=complex)
    if arr.ndim != 2:
        raise DimensionError("channel matrix must be 2-D (users x elements)")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("channel matrix must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("channel matrix contains non-finite entries")
    return arr


def check_fitted(estimator, attribute: str) -> None:
    from sklearn.exceptions import NotFittedError

    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit first"
        )
