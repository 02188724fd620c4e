import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ConfigurationError, DomainError


def as_2d(X, name="X", allow_empty=True):
    X = check_array(
        X, ensure_2d=True, dtype=np.float64,
        ensure_min_samples=0 if allow_empty else 1,
        ensure_min_features=0 if allow_empty else 1,
        input_name=name,
    )
    return X


def as_1d(a, name="array", length=None):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite values")
    if length is not None and a.shape[0] != length:
        raise DomainError(f"{name} has length {a.shape[0]}, expected {length}")
    return a


def check_probabilities(p, name, atol=1e-12):
    p = as_1d(p, name)
    if np.any(p < 0):
        raise ConfigurationError(f"{name}: negative probability")
    if abs(p.sum() - 1.0) > atol:
        raise ConfigurationError(f"{name}: probabilities sum to {p.sum()!r}, not 1")
    return p


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigurationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def add_intercept(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(X.shape[0]), X])
