"""Measurement operators, ground-truth signals and intensity synthesis.

Intensities follow ``y_i = |a_i^H x|^2 + n_i``; the solvers consume the
element-wise square root of ``y``.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from ._validation import (ConfigError, check_complex_vector, check_count,
                          check_nonnegative, check_random_state)
from .prox import BoundOrigin, MajorizerParams, power_iteration

__all__ = [
    "EnsembleKind", "MeasurementEnsemble", "AWGN", "IntensitySamples",
    "GroundTruth", "DegenerateMeasurementError", "ModulusNoiseReport",
    "build_partial_dft", "build_complex_gaussian", "dense_ensemble",
    "sparse_ground_truth", "synthesize", "forward", "adjoint",
    "awgn_variance", "verify_modulus_noise_advantage",
]

# Inflation applied to power-iteration estimates of lambda_max(A^H A).
SPECTRAL_MARGIN = 0.01


class EnsembleKind(enum.Enum):
    PARTIAL_DFT = "partial-dft"
    COMPLEX_GAUSSIAN = "complex-gaussian"
    DENSE = "dense"


class DegenerateMeasurementError(ValueError):
    """A measurement magnitude ``|a_i^H x|`` is too close to zero."""


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    """The measurement matrix ``A`` (M x N) with fast products.

    Partial-DFT ensembles store only the selected row indices of the unitary
    N-point DFT and apply ``A`` by FFT; the other kinds hold a dense matrix.
    """

    kind: EnsembleKind
    m: int
    n: int
    spectral_bound: float
    rows: np.ndarray = None
    matrix: np.ndarray = None
    seed: int = None

    @property
    def shape(self):
        return (self.m, self.n)

    @property
    def majorizer(self):
        origin = (BoundOrigin.UNITARITY_EXACT if self.kind is EnsembleKind.PARTIAL_DFT
                  else BoundOrigin.POWER_ITERATION)
        return MajorizerParams(self.spectral_bound, origin)

    def forward(self, x):
        """``A @ x`` for a vector or an N x P matrix of column signals."""
        x = np.asarray(x, dtype=np.complex128)
        if x.shape[0] != self.n:
            raise ConfigError(f"signal has leading dimension {x.shape[0]}, expected {self.n}")
        if self.kind is EnsembleKind.PARTIAL_DFT:
            return np.fft.fft(x, axis=0, norm="ortho")[self.rows]
        return self.matrix @ x

    def adjoint(self, u):
        """``A^H @ u`` for a vector or an M x P matrix."""
        u = np.asarray(u, dtype=np.complex128)
        if u.shape[0] != self.m:
            raise ConfigError(f"measurement has leading dimension {u.shape[0]}, expected {self.m}")
        if self.kind is EnsembleKind.PARTIAL_DFT:
            full = np.zeros((self.n,) + u.shape[1:], dtype=np.complex128)
            full[self.rows] = u
            return np.fft.ifft(full, axis=0, norm="ortho")
        return self.matrix.conj().T @ u

    def gram_apply(self, v):
        return self.adjoint(self.forward(v))

    def dense(self):
        """Materialize ``A`` as an M x N array."""
        if self.kind is EnsembleKind.PARTIAL_DFT:
            k = self.rows[:, None]
            j = np.arange(self.n)[None, :]
            return np.exp(-2j * np.pi * k * j / self.n) / np.sqrt(self.n)
        return self.matrix.copy()


def forward(ensemble, x):
    return ensemble.forward(x)


def adjoint(ensemble, u):
    return ensemble.adjoint(u)


def _spectral_estimate(matrix, seed):
    m, n = matrix.shape
    # power iteration on the smaller Gram matrix; both share lambda_max
    if m <= n:
        apply, dim = (lambda v: matrix @ (matrix.conj().T @ v)), m
    else:
        apply, dim = (lambda v: matrix.conj().T @ (matrix @ v)), n
    lam, _ = power_iteration(apply, dim, random_state=seed)
    return lam * (1.0 + SPECTRAL_MARGIN)


def build_partial_dft(n, m, rng_seed=None):
    """Select ``m`` distinct rows of the unitary ``n``-point DFT at random.

    ``A A^H = I_m`` and ``A^H A`` is an orthogonal projector, so the
    spectral bound 1 is exact.
    """
    n = check_count(n, "n")
    m = check_count(m, "m")
    if m > n:
        raise ConfigError(f"cannot select m={m} rows from an n={n} DFT")
    rng = check_random_state(rng_seed)
    rows = np.sort(rng.choice(n, size=m, replace=False))
    return MeasurementEnsemble(EnsembleKind.PARTIAL_DFT, m, n, 1.0, rows=rows,
                               seed=rng_seed if isinstance(rng_seed, int) else None)


def build_complex_gaussian(n, m, rng_seed=None):
    """I.i.d. circularly-symmetric complex normal entries of unit variance."""
    n = check_count(n, "n")
    m = check_count(m, "m")
    rng = check_random_state(rng_seed)
    matrix = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(2.0)
    bound = _spectral_estimate(matrix, rng)
    return MeasurementEnsemble(EnsembleKind.COMPLEX_GAUSSIAN, m, n, bound, matrix=matrix,
                               seed=rng_seed if isinstance(rng_seed, int) else None)


def dense_ensemble(matrix, spectral_bound=None, seed=0):
    """Wrap an arbitrary complex matrix; the bound is estimated when not given."""
    matrix = np.array(matrix, dtype=np.complex128)
    if matrix.ndim != 2 or min(matrix.shape) < 1:
        raise ConfigError(f"dense ensemble needs a non-empty 2-D matrix, got {matrix.shape}")
    if spectral_bound is None:
        spectral_bound = _spectral_estimate(matrix, seed)
    spectral_bound = check_nonnegative(spectral_bound, "spectral_bound")
    m, n = matrix.shape
    return MeasurementEnsemble(EnsembleKind.DENSE, m, n, spectral_bound, matrix=matrix)


@dataclass(frozen=True)
class AWGN:
    """Additive white Gaussian noise on intensities at a given SNR (dB)."""

    snr_db: float


@dataclass(frozen=True, eq=False)
class IntensitySamples:
    y: np.ndarray
    sqrt_y: np.ndarray
    noise_model: AWGN = None
    discarded_count: int = 0


@dataclass(frozen=True, eq=False)
class GroundTruth:
    x_true: np.ndarray
    sparsity: int = None
    support: np.ndarray = None


def sparse_ground_truth(n, k, rng_seed=None, amplitude="gaussian"):
    """A K-sparse complex signal on a uniformly random support.

    ``amplitude="gaussian"`` draws unit-variance complex normal nonzeros;
    ``"unit-modulus"`` draws magnitude-one entries with uniform phase.
    """
    n = check_count(n, "n")
    k = check_count(k, "k")
    if k > n:
        raise ConfigError(f"sparsity k={k} exceeds n={n}")
    rng = check_random_state(rng_seed)
    support = np.sort(rng.choice(n, size=k, replace=False))
    if amplitude == "gaussian":
        vals = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2.0)
        # a zero draw would break the stated sparsity; probability zero in practice
        vals[vals == 0] = 1.0
    elif amplitude == "unit-modulus":
        vals = np.exp(2j * np.pi * rng.random(k))
    else:
        raise ConfigError(f"unknown amplitude distribution {amplitude!r}")
    x = np.zeros(n, dtype=np.complex128)
    x[support] = vals
    return GroundTruth(x, sparsity=k, support=support)


def awgn_variance(clean_intensity, snr_db):
    """Noise variance giving ``10 log10(||y_clean||^2 / (count * var)) = snr_db``."""
    clean_intensity = np.asarray(clean_intensity, dtype=np.float64)
    power = np.sum(clean_intensity ** 2) / clean_intensity.size
    return power / 10.0 ** (snr_db / 10.0)


def synthesize(ensemble, x_true, noise_model=None, noise_seed=None):
    """Intensities ``|A x|^2 + n`` for a signal vector or an N x P signal matrix.

    Intensities that turn negative under noise are discarded: they are set to
    zero and counted, which keeps the array shape intact.
    """
    if isinstance(x_true, GroundTruth):
        x_true = x_true.x_true
    x_true = np.asarray(x_true, dtype=np.complex128)
    if x_true.ndim not in (1, 2) or x_true.shape[0] != ensemble.n:
        raise ConfigError(f"signal shape {x_true.shape} does not match ensemble n={ensemble.n}")
    y = np.abs(ensemble.forward(x_true)) ** 2
    discarded = 0
    if noise_model is not None:
        var = awgn_variance(y, noise_model.snr_db)
        rng = check_random_state(noise_seed)
        y = y + np.sqrt(var) * rng.standard_normal(y.shape)
        negative = y < 0
        discarded = int(np.count_nonzero(negative))
        y[negative] = 0.0
    return IntensitySamples(y, np.sqrt(y), noise_model, discarded)


@dataclass(frozen=True, eq=False)
class ModulusNoiseReport:
    """Per-measurement Monte Carlo statistics of the modulus-domain noise.

    ``var_ratio`` is the measured variance of ``sqrt(y_i) - |a_i^H x|``
    divided by the first-order prediction ``Var[n_i] / (4 |a_i^H x|^2)``.
    ``mean_ratio`` compares the measured mean absolute modulus noise with its
    first-order prediction ``E|n_i| / (2 |a_i^H x|)``. Both tend to 1 as the
    noise shrinks. ``intensity_ratio`` is modulus variance over intensity
    variance, below 1 when the modulus is the better-conditioned datum.
    """

    amplitude: np.ndarray
    noise_var: float
    trials: int
    modulus_mean: np.ndarray
    modulus_var: np.ndarray
    modulus_mean_abs: np.ndarray
    intensity_var: np.ndarray
    intensity_mean_abs: np.ndarray
    predicted_var: np.ndarray
    var_ratio: np.ndarray
    mean_ratio: np.ndarray
    intensity_ratio: np.ndarray
    discarded_fraction: np.ndarray
    advantage: np.ndarray = field(default=None)


def verify_modulus_noise_advantage(ensemble, x_true, noise_var, trials=100_000,
                                   rng_seed=None, batch=8192):
    """Monte Carlo comparison of modulus-domain and intensity-domain noise.

    Raises
    ------
    DegenerateMeasurementError
        If any ``|a_i^H x| < 1e-6``; the first-order model breaks down there.
    """
    noise_var = check_nonnegative(noise_var, "noise_var")
    trials = check_count(trials, "trials", minimum=2)
    x_true = check_complex_vector(getattr(x_true, "x_true", x_true), "x_true", ensemble.n)
    amp = np.abs(ensemble.forward(x_true))
    if np.any(amp < 1e-6):
        raise DegenerateMeasurementError(
            f"{int(np.count_nonzero(amp < 1e-6))} measurement(s) with |a^H x| < 1e-6")
    rng = check_random_state(rng_seed)
    sigma = np.sqrt(noise_var)
    m = amp.shape[0]
    # running sums over trials, accumulated batch by batch
    s_mod = np.zeros(m)
    s_mod2 = np.zeros(m)
    s_mod_abs = np.zeros(m)
    s_int = np.zeros(m)
    s_int2 = np.zeros(m)
    s_int_abs = np.zeros(m)
    n_neg = np.zeros(m)
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        noise = sigma * rng.standard_normal((b, m))
        y = amp ** 2 + noise
        neg = y < 0
        n_neg += neg.sum(axis=0)
        mod_noise = np.sqrt(np.where(neg, 0.0, y)) - amp
        s_mod += mod_noise.sum(axis=0)
        s_mod2 += (mod_noise ** 2).sum(axis=0)
        s_mod_abs += np.abs(mod_noise).sum(axis=0)
        s_int += noise.sum(axis=0)
        s_int2 += (noise ** 2).sum(axis=0)
        s_int_abs += np.abs(noise).sum(axis=0)
        done += b
    mod_mean = s_mod / trials
    mod_var = np.maximum(s_mod2 / trials - mod_mean ** 2, 0.0) * trials / (trials - 1)
    int_mean = s_int / trials
    int_var = np.maximum(s_int2 / trials - int_mean ** 2, 0.0) * trials / (trials - 1)
    predicted = noise_var / (4.0 * amp ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        var_ratio = np.where(predicted > 0, mod_var / predicted, np.nan)
        predicted_abs = (s_int_abs / trials) / (2.0 * amp)
        mean_ratio = np.where(predicted_abs > 0, (s_mod_abs / trials) / predicted_abs, np.nan)
        intensity_ratio = np.where(int_var > 0, mod_var / int_var, np.nan)
    return ModulusNoiseReport(
        amplitude=amp, noise_var=noise_var, trials=trials,
        modulus_mean=mod_mean, modulus_var=mod_var, modulus_mean_abs=s_mod_abs / trials,
        intensity_var=int_var, intensity_mean_abs=s_int_abs / trials,
        predicted_var=predicted, var_ratio=var_ratio, mean_ratio=mean_ratio,
        intensity_ratio=intensity_ratio, discarded_fraction=n_neg / trials,
        advantage=amp > 0.5,
    )
