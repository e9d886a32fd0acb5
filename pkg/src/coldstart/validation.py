"""Input validation helpers used by the estimators and operations."""

import numpy as np


def check_array(a, name="array", ndim=None, dtype=float, allow_empty=False):
    """Coerce to a contiguous ndarray and validate shape and finiteness."""
    arr = np.ascontiguousarray(a, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        if ndim == 2 and arr.ndim == 1:
            arr = arr.reshape(1, -1)
        else:
            raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_scalar(x, name="value", positive=False, finite=True):
    """Validate a real scalar, returning it as float."""
    val = float(x)
    if finite and not np.isfinite(val):
        raise ValueError(f"{name} must be finite, got {val}")
    if positive and val <= 0:
        raise ValueError(f"{name} must be > 0, got {val}")
    return val


def check_fitted(estimator, attribute):
    """Raise if an estimator has not been fitted yet."""
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )
