"""Input validation helpers shared by the solvers and estimators.

``sklearn.utils.check_array`` rejects complex input, so the checks the
solvers need are written here against plain numpy.
"""

import numbers

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid arguments or experiment configuration."""


def check_count(value, name, minimum=1):
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_nonnegative(value, name):
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ConfigError(f"{name} must be a finite nonnegative number, got {value}")
    return value


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a finite positive number, got {value}")
    return value


def check_complex_vector(x, name="x", length=None):
    """Return ``x`` as a 1-D complex128 array, validating length and finiteness."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ConfigError(f"{name} must be 1-D, got shape {x.shape}")
    x = x.astype(np.complex128, copy=False)
    if length is not None and x.shape[0] != length:
        raise ConfigError(f"{name} has length {x.shape[0]}, expected {length}")
    if not np.all(np.isfinite(x)):
        raise ConfigError(f"{name} contains non-finite values")
    return x


def check_complex_matrix(X, name="X", rows=None):
    X = np.asarray(X)
    if X.ndim != 2:
        raise ConfigError(f"{name} must be 2-D, got shape {X.shape}")
    X = X.astype(np.complex128, copy=False)
    if rows is not None and X.shape[0] != rows:
        raise ConfigError(f"{name} has {X.shape[0]} rows, expected {rows}")
    if not np.all(np.isfinite(X)):
        raise ConfigError(f"{name} contains non-finite values")
    return X


def check_magnitudes(sqrt_y, name="sqrt_y", rows=None):
    """Validate a real nonnegative magnitude vector or matrix (rows = measurements)."""
    sqrt_y = np.asarray(sqrt_y)
    if np.iscomplexobj(sqrt_y):
        raise ConfigError(f"{name} must be real")
    sqrt_y = sqrt_y.astype(np.float64, copy=False)
    if sqrt_y.ndim not in (1, 2):
        raise ConfigError(f"{name} must be 1-D or 2-D, got shape {sqrt_y.shape}")
    if rows is not None and sqrt_y.shape[0] != rows:
        raise ConfigError(f"{name} has {sqrt_y.shape[0]} measurements, expected {rows}")
    if not np.all(np.isfinite(sqrt_y)) or np.any(sqrt_y < 0):
        raise ConfigError(f"{name} must be finite and nonnegative")
    return sqrt_y


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ConfigError(f"cannot seed a generator from {seed!r}")
