"""Input validation helpers shared by the estimator and the verifiers."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array, check_X_y


def check_points(X, d: int | None = None) -> np.ndarray:
    """Coerce ``X`` to a finite 2-D float array, optionally checking its width."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if d is None or X.shape[0] == d else X.reshape(-1, 1)
    X = check_array(X, dtype=float, ensure_all_finite=True)
    if d is not None and X.shape[1] != d:
        raise ValueError(f"X has {X.shape[1]} features, expected {d}")
    return X


def check_dataset(X, y, d: int | None = None):
    """Validate a regression sample (X, y); returns float arrays of shape (n, d), (n,)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    X, y = check_X_y(X, y, dtype=float, y_numeric=True, ensure_all_finite=True)
    if d is not None and X.shape[1] != d:
        raise ValueError(f"X has {X.shape[1]} features, expected {d}")
    return X, np.asarray(y, dtype=float)


def check_random_state(seed) -> np.random.Generator:
    """Turn None, an int, a SeedSequence or a Generator into a numpy Generator."""
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    if isinstance(seed, np.random.Generator):
        return seed
    raise ValueError(f"{seed!r} cannot be used to seed a numpy Generator")
