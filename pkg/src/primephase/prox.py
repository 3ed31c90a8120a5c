"""Majorization building blocks shared by both solvers.

Every quadratic term ``x^H L x`` in the two objectives is majorized by
``bound * ||x||^2`` plus linear terms, which is valid whenever
``bound >= lambda_max(L)``. This module produces such bounds, checks them,
and provides the complex l1 proximal map that solves the resulting surrogate.
"""

import enum
from dataclasses import dataclass

import numpy as np

from ._validation import ConfigError, check_count, check_random_state


class BoundOrigin(enum.Enum):
    POWER_ITERATION = "power-iteration"
    UNITARITY_EXACT = "unitarity-exact"
    ATOM_COUNT = "atom-count"


@dataclass(frozen=True)
class MajorizerParams:
    """An upper bound on the largest eigenvalue of a Gram matrix.

    Attributes
    ----------
    bound : float
        Positive constant used as the curvature of the isotropic majorizer.
    origin : BoundOrigin
        How the bound was obtained.
    """

    bound: float
    origin: BoundOrigin

    def __post_init__(self):
        if not np.isfinite(self.bound) or self.bound <= 0:
            raise ConfigError(f"majorizer bound must be positive, got {self.bound}")
        object.__setattr__(self, "origin", BoundOrigin(self.origin))


def soft_threshold(c, shrink):
    """Complex soft-thresholding, ``exp(j arg c) * max(|c| - shrink, 0)``.

    This is the exact minimizer of ``||x - c||^2 + 2 * shrink * ||x||_1``.
    The phase of a zero entry is taken as 0, so zeros map to zeros.
    """
    if shrink < 0:
        raise ConfigError(f"shrink must be nonnegative, got {shrink}")
    c = np.asarray(c, dtype=np.complex128)
    return np.exp(1j * np.angle(c)) * np.maximum(np.abs(c) - shrink, 0.0)


def power_iteration(gram_apply, n, min_iter=30, max_iter=1000, rtol=1e-12,
                    random_state=None, v0=None):
    """Estimate the largest eigenvalue of a Hermitian PSD operator.

    Parameters
    ----------
    gram_apply : callable
        Maps a complex vector of length ``n`` to ``L @ v``.
    n : int
        Operator dimension.
    min_iter, max_iter : int
        Iteration limits. The loop stops after ``min_iter`` once the Rayleigh
        quotient changes by less than ``rtol`` (relative).
    v0 : array, optional
        Starting vector; a random complex Gaussian vector otherwise.

    Returns
    -------
    lam : float
        Rayleigh-quotient estimate, which never exceeds the true value.
    v : ndarray
        The final unit-norm iterate.
    """
    n = check_count(n, "n")
    if v0 is None:
        rng = check_random_state(random_state)
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    else:
        v = np.array(v0, dtype=np.complex128)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ConfigError("power iteration start vector is zero")
    v = v / nv
    lam = 0.0
    for it in range(max_iter):
        w = gram_apply(v)
        lam_new = float(np.vdot(v, w).real)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, v
        v = w / nw
        if it + 1 >= min_iter and abs(lam_new - lam) <= rtol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return max(lam, 0.0), v


def power_iteration_bound(gram_apply, n, margin=0.01, random_state=None, **kwargs):
    """Power-iteration estimate inflated by ``1 + margin``."""
    lam, _ = power_iteration(gram_apply, n, random_state=random_state, **kwargs)
    return MajorizerParams(max(lam, np.finfo(float).tiny) * (1.0 + margin),
                           BoundOrigin.POWER_ITERATION)


def unitary_bound():
    """Bound for row-selections of a unitary matrix, whose Gram is a projector."""
    return MajorizerParams(1.0, BoundOrigin.UNITARITY_EXACT)


def dictionary_bound(dict_cols):
    """Atom-count bound on ``lambda_max(D^H D)`` for atoms in the unit ball.

    ``lambda_max(D^H D) <= sum_l ||d_l||^2 <= L``, with equality when all
    atoms are the same unit vector.
    """
    dict_cols = check_count(dict_cols, "dict_cols")
    return MajorizerParams(float(dict_cols), BoundOrigin.ATOM_COUNT)


def quadratic_majorizer_check(gram_apply, bound, probes=64, n=None, random_state=None):
    """Check ``bound * ||x||^2 >= x^H L x`` on random probe vectors.

    ``gram_apply`` maps ``x`` to ``L @ x``. Besides the random probes, the
    power-iteration estimate of the top eigenvector is probed, since random
    directions rarely approach the worst case. A small relative slack absorbs
    rounding in the quadratic form.
    """
    if isinstance(bound, MajorizerParams):
        bound = bound.bound
    if n is None:
        raise ConfigError("probe dimension n is required")
    rng = check_random_state(random_state)
    candidates = [rng.standard_normal(n) + 1j * rng.standard_normal(n)
                  for _ in range(check_count(probes, "probes"))]
    candidates.append(power_iteration(gram_apply, n, random_state=rng)[1])
    for x in candidates:
        quad = np.vdot(x, gram_apply(x)).real
        lhs = bound * np.vdot(x, x).real
        if quad > lhs + 1e-12 * max(abs(lhs), 1.0):
            return False
    return True
