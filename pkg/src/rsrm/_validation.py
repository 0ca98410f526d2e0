"""Input checks for the estimator layer."""
import numpy as np
from sklearn.utils import check_array

from .exceptions import InvalidInput
from .linalg import spd_check


def check_vectors(X, min_features=1):
    """2-D float array of samples (rows), finite."""
    return check_array(X, dtype=np.float64, ensure_min_features=min_features)


def check_matrix_stack(X, spd=False, atol=1e-10):
    """``(n, d, d)`` stack of symmetric matrices; ``spd`` also requires PD.

    A single ``(d, d)`` matrix is promoted to a stack of one.
    """
    X = check_array(X, dtype=np.float64, allow_nd=True, ensure_2d=False)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise InvalidInput(f"expected a stack of square matrices, got shape {X.shape}")
    scale = np.maximum(1.0, np.abs(X).max(axis=(1, 2)))
    asym = np.abs(X - np.swapaxes(X, 1, 2)).max(axis=(1, 2)) > atol * scale
    if asym.any():
        raise InvalidInput(f"matrix {int(np.argmax(asym))} is not symmetric")
    if spd:
        for i, a in enumerate(X):
            if not spd_check(a, atol):
                raise InvalidInput(f"matrix {i} is not positive definite")
    return X


def check_rank(r, d, name="n_components"):
    if r is None:
        return d
    if not isinstance(r, (int, np.integer)) or not 1 <= r <= d:
        raise InvalidInput(f"{name} must be an integer in [1, {d}], got {r!r}")
    return int(r)
