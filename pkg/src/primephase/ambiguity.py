"""Trivial ambiguities of Fourier-magnitude measurements and the NSE metric."""

from dataclasses import dataclass

import numpy as np

from ._validation import ConfigError, check_complex_vector

SUCCESS_THRESHOLD = 1e-4


@dataclass(frozen=True)
class AmbiguityClass:
    """Which magnitude-preserving transformations are quotiented out."""

    allow_phase: bool = True
    allow_circular_shift: bool = True
    allow_conjugate_inversion: bool = True

    def __post_init__(self):
        if not self.allow_phase:
            raise ConfigError("global phase must always be allowed")


DFT_AMBIGUITIES = AmbiguityClass()
PHASE_ONLY = AmbiguityClass(True, False, False)


def conjugate_inversion(x):
    """``[x]_i -> conj([x]_{(N - i) mod N})``; index 0 stays in place."""
    x = np.asarray(x)
    return np.conj(np.roll(x[::-1], 1))


def candidates(x, cls=DFT_AMBIGUITIES):
    """Rows are the phase-free candidates: shifts of ``x`` and of its conjugate inversion."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[0]
    bases = [x]
    if cls.allow_conjugate_inversion:
        bases.append(conjugate_inversion(x))
    shifts = range(n) if cls.allow_circular_shift else (0,)
    return np.array([np.roll(b, s) for b in bases for s in shifts])


def nse(x_star, x_true, cls=DFT_AMBIGUITIES):
    """Least normalized squared error over the ambiguity set of ``x_star``.

    For each candidate ``c`` the best global phase is closed form:
    ``min_phi ||c e^{j phi} - x||^2 = ||c||^2 + ||x||^2 - 2 |c^H x|``.
    """
    x_true = check_complex_vector(x_true, "x_true")
    x_star = check_complex_vector(x_star, "x_star", x_true.shape[0])
    ref = np.vdot(x_true, x_true).real
    if ref == 0:
        raise ConfigError("nse is undefined for a zero reference signal")
    cand = candidates(x_star, cls)
    # |c^H x| for every candidate at once
    cross = np.abs(cand.conj() @ x_true)
    err = np.vdot(x_star, x_star).real + ref - 2.0 * cross.max()
    return max(float(err), 0.0) / ref


def is_success(nse_value):
    if nse_value < 0:
        raise ConfigError("nse must be nonnegative")
    return bool(nse_value < SUCCESS_THRESHOLD)
