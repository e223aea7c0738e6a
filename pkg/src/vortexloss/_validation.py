"""Small argument checks shared by the numerical modules."""

import numpy as np

from .exceptions import DomainError


def as_float_array(x, name="value"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr


def scalar_or_array(arr):
    """Return a Python float for 0-d results, else the array unchanged."""
    arr = np.asarray(arr)
    return arr.item() if arr.ndim == 0 else arr


def check_positive(x, name):
    arr = as_float_array(x, name)
    if np.any(arr <= 0):
        raise DomainError(f"{name} must be > 0, got {x!r}")
    return arr


def check_nonnegative(x, name):
    arr = as_float_array(x, name)
    if np.any(arr < 0):
        raise DomainError(f"{name} must be >= 0, got {x!r}")
    return arr


def check_temperature(t, tc, limit=1.0):
    """Validate ``0 <= t < limit * tc`` elementwise and return a float array."""
    arr = as_float_array(t, "temperature")
    if np.any(arr < 0):
        raise DomainError(f"temperature must be >= 0 K, got {t!r}")
    if np.any(arr >= limit * tc):
        raise DomainError(
            f"temperature {np.max(arr):g} K is outside the superconducting "
            f"range (must be < {limit * tc:g} K)"
        )
    return arr
