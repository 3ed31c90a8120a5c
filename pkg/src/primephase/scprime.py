"""SC-PRIME: joint phase retrieval and dictionary learning by BSUM.

Minimizes, over signals ``X`` (N x P), a dictionary ``D`` (N x L, atoms in
the unit ball) and codes ``Z`` (L x P)::

    sum_p ||sqrt(y_p) - |A x_p|||^2 + mu ||x_p - D z_p||^2 + rho ||z_p||_1

Each cycle updates Z, then X, then D, every block by exact minimization of
a majorizer, so the objective never increases.
"""

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (ConfigError, check_complex_matrix, check_count, check_magnitudes,
                          check_nonnegative, check_positive, check_random_state)
from .measurements import IntensitySamples
from .prox import MajorizerParams, dictionary_bound, power_iteration_bound, soft_threshold

DEAD_ATOM_EPS = 1e-12
SEMI_UNITARY_TOL = 1e-10


class EBoundRule(enum.Enum):
    ATOM_COUNT = "atom-count"
    POWER_ITERATION = "power-iteration"


class AtomUpdate(enum.Enum):
    # all atoms from one snapshot; if that would increase ||X - DZ||_F, take
    # a majorized projected step with curvature lambda_max(Z Z^H) instead
    SAFEGUARDED = "safeguarded"
    JACOBI = "jacobi"
    GAUSS_SEIDEL = "gauss-seidel"


@dataclass(frozen=True)
class ScprimeConfig:
    """Settings for :func:`solve_scprime`.

    ``rho=None`` picks ``rho_factor * mu * max|D^H X|`` at the initial point
    and keeps it fixed. ``f_bound=None`` uses the ensemble's spectral bound.
    """

    mu: float = 0.5
    rho: float = None
    max_iter: int = 100
    n_atoms: int = 128
    f_bound: MajorizerParams = None
    e_bound_rule: EBoundRule = EBoundRule.ATOM_COUNT
    atom_update: AtomUpdate = AtomUpdate.SAFEGUARDED
    rho_factor: float = 0.1
    init_scale: float = 1.0
    tol: float = 0.0
    rng_seed: int = None

    def __post_init__(self):
        check_positive(self.mu, "mu")
        if self.rho is not None:
            check_nonnegative(self.rho, "rho")
        check_count(self.max_iter, "max_iter", minimum=0)
        check_count(self.n_atoms, "n_atoms")
        check_nonnegative(self.rho_factor, "rho_factor")
        check_positive(self.init_scale, "init_scale")
        check_nonnegative(self.tol, "tol")
        object.__setattr__(self, "e_bound_rule", EBoundRule(self.e_bound_rule))
        object.__setattr__(self, "atom_update", AtomUpdate(self.atom_update))


@dataclass(eq=False)
class ScprimeState:
    """Iterate of SC-PRIME.

    ``objective_trace[0]`` is the objective at the initial point, then one
    entry per cycle. ``block_trace`` (when recorded) holds the objective
    after the Z, X and D updates of each cycle as rows of a (cycles, 3) array.
    """

    X: np.ndarray
    D: np.ndarray
    Z: np.ndarray
    rho: float
    mu: float
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    block_trace: np.ndarray = None
    fallbacks: int = 0

    def __post_init__(self):
        L, P = self.D.shape[1], self.X.shape[1]
        if L >= P:
            raise ConfigError(f"need fewer atoms than signals (L={L}, P={P})")
        if self.Z.shape != (L, P) or self.D.shape[0] != self.X.shape[0]:
            raise ConfigError("inconsistent X, D, Z shapes")

    @property
    def n_iter(self):
        return max(len(self.objective_trace) - 1, 0)

    @property
    def model(self):
        """Dictionary approximation ``D Z``."""
        return self.D @ self.Z


def _sqrt_Y(samples):
    if isinstance(samples, IntensitySamples):
        return samples.sqrt_y
    return np.asarray(samples, dtype=np.float64)


def objective(ensemble, sqrt_Y, X, D, Z, mu, rho):
    AX = ensemble.forward(X)
    return float(np.sum((sqrt_Y - np.abs(AX)) ** 2) + mu * np.sum(np.abs(X - D @ Z) ** 2)
                 + rho * np.sum(np.abs(Z)))


def _e_bound(D, rule):
    L = D.shape[1]
    if rule is EBoundRule.ATOM_COUNT:
        return dictionary_bound(L).bound
    gram = D.conj().T @ D
    est = power_iteration_bound(lambda v: gram @ v, L, random_state=0).bound
    # the atom-count bound always holds, so never go above it
    return min(est, float(L))


def update_codes(state, config):
    """Sparse-coding block: one majorized soft-threshold step on every column of Z."""
    D, X, Z = state.D, state.X, state.Z
    gram = D.conj().T @ D
    if np.max(np.abs(gram - np.eye(gram.shape[0]))) < SEMI_UNITARY_TOL:
        return soft_threshold(D.conj().T @ X, state.rho / (2.0 * state.mu))
    E = _e_bound(D, config.e_bound_rule)
    C = Z - (gram @ Z - D.conj().T @ X) / E
    return soft_threshold(C, state.rho / (2.0 * E * state.mu))


def update_signals(state, ensemble, sqrt_Y, config):
    """Signal block: ``X = [F X - A^H(AX - sqrt(Y) e^{j arg AX}) + mu D Z] / (F + mu)``."""
    F = config.f_bound if config.f_bound is not None else ensemble.majorizer
    F = F.bound if isinstance(F, MajorizerParams) else float(F)
    X, mu = state.X, state.mu
    AX = ensemble.forward(X)
    grad = ensemble.adjoint(AX - sqrt_Y * np.exp(1j * np.angle(AX)))
    return (F * X - grad + mu * (state.D @ state.Z)) / (F + mu)


def _project_ball(G):
    return G / np.maximum(np.linalg.norm(G, axis=0), 1.0)


def _jacobi(X, D, Z):
    R = X - D @ Z
    n2 = np.sum(np.abs(Z) ** 2, axis=1)
    live = n2 > DEAD_ATOM_EPS
    D_new = D.copy()
    D_new[:, live] = _project_ball(D[:, live] + R @ Z[live].conj().T / n2[live])
    return D_new


def _gauss_seidel(X, D, Z):
    D = D.copy()
    R = X - D @ Z
    n2 = np.sum(np.abs(Z) ** 2, axis=1)
    for l in np.flatnonzero(n2 > DEAD_ATOM_EPS):
        z = Z[l]
        g = D[:, l] + R @ z.conj() / n2[l]
        d = g / max(np.linalg.norm(g), 1.0)
        R -= np.outer(d - D[:, l], z)
        D[:, l] = d
    return D


def _majorized_step(X, D, Z):
    # ||X - DZ||^2 <= const + w ||D - D_k - R Z^H / w||^2 for w >= lambda_max(Z Z^H);
    # the minimizer over unit-ball atoms is column-wise projection
    w = np.linalg.eigvalsh(Z @ Z.conj().T)[-1] * (1.0 + 1e-12)
    if w <= 0:
        return D.copy()
    return _project_ball(D + (X - D @ Z) @ Z.conj().T / w)


def update_dictionary(state, mode=AtomUpdate.SAFEGUARDED, return_fallback=False):
    """Dictionary block: closed-form unit-ball atom updates.

    Atoms whose code row has squared norm at most ``1e-12`` are left as is.
    The per-atom updates all start from the same snapshot of ``D``. Done
    jointly they are not a majorizer of the block, so in the default
    safeguarded mode a result that increases ``||X - DZ||_F`` is replaced by
    a projected step with curvature ``lambda_max(Z Z^H)``, which always
    descends. ``"gauss-seidel"`` updates atoms one after another instead.
    """
    mode = AtomUpdate(mode)
    X, D, Z = state.X, state.D, state.Z
    fallback = False
    if mode is AtomUpdate.GAUSS_SEIDEL:
        D_new = _gauss_seidel(X, D, Z)
    else:
        D_new = _jacobi(X, D, Z)
        if mode is AtomUpdate.SAFEGUARDED:
            before = np.sum(np.abs(X - D @ Z) ** 2)
            if np.sum(np.abs(X - D_new @ Z) ** 2) > before:
                D_new = _majorized_step(X, D, Z)
                fallback = True
    return (D_new, fallback) if return_fallback else D_new


def initialize(n, p, config, sqrt_Y=None, ensemble=None):
    """Random X and D (atoms scaled into the unit ball), least-squares Z.

    When data are given, each random column ``x_p`` is rescaled so that
    ``||A x_p|| = ||sqrt(y_p)||``, times ``config.init_scale``; otherwise
    entries have variance ``init_scale**2``. ``Z0 = pinv(D^H D) D^H X`` is the
    minimum-norm minimizer of ``||X - D Z||_F``. The returned state has
    ``rho`` resolved.
    """
    L = config.n_atoms
    if L >= p:
        raise ConfigError(f"need fewer atoms than signals (L={L}, P={p})")
    rng = check_random_state(config.rng_seed)
    s = config.init_scale / np.sqrt(2.0)
    X = s * (rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p)))
    if sqrt_Y is not None:
        energy = np.linalg.norm(ensemble.forward(X), axis=0)
        X *= np.linalg.norm(sqrt_Y, axis=0) / np.where(energy > 0, energy, 1.0)
    D = (rng.standard_normal((n, L)) + 1j * rng.standard_normal((n, L))) / np.sqrt(2.0 * n)
    D = _project_ball(D)
    Z = np.linalg.pinv(D.conj().T @ D) @ (D.conj().T @ X)
    rho = config.rho
    if rho is None:
        rho = config.rho_factor * config.mu * float(np.max(np.abs(D.conj().T @ X)))
    return ScprimeState(X, D, Z, rho, config.mu)


def solve_scprime(ensemble, samples, config=None, record_blocks=False, init=None):
    """Run ``config.max_iter`` SC-PRIME cycles (Z, then X, then D).

    Parameters
    ----------
    ensemble : MeasurementEnsemble
        Shared operator applied to every signal column.
    samples : IntensitySamples or array of shape (M, P)
        Intensities, or directly the magnitudes ``sqrt(Y)``.
    config : ScprimeConfig
    record_blocks : bool
        Also record the objective after each block update.
    init : ScprimeState, optional
        Starting point (warm start); random initialization otherwise.

    Returns
    -------
    ScprimeState
    """
    config = config or ScprimeConfig()
    sqrt_Y = check_magnitudes(_sqrt_Y(samples), rows=ensemble.m)
    if sqrt_Y.ndim != 2:
        raise ConfigError("solve_scprime needs an M x P magnitude matrix")
    n, p = ensemble.n, sqrt_Y.shape[1]
    if init is None:
        state = initialize(n, p, config, sqrt_Y, ensemble)
    else:
        check_complex_matrix(init.X, "X", n)
        state = replace(init)
    if not np.any(sqrt_Y):
        # all-zero data: X = 0, Z = 0 attains the objective's lower bound 0
        state = replace(state, X=np.zeros_like(state.X), Z=np.zeros_like(state.Z))
    cfg = replace(config, rho=state.rho)

    f = objective(ensemble, sqrt_Y, state.X, state.D, state.Z, state.mu, state.rho)
    trace = [f]
    blocks = []
    fallbacks = state.fallbacks
    for _ in range(config.max_iter):
        state.Z = update_codes(state, cfg)
        f_z = objective(ensemble, sqrt_Y, state.X, state.D, state.Z, state.mu, state.rho) \
            if record_blocks else None
        state.X = update_signals(state, ensemble, sqrt_Y, cfg)
        f_x = objective(ensemble, sqrt_Y, state.X, state.D, state.Z, state.mu, state.rho) \
            if record_blocks else None
        state.D, fb = update_dictionary(state, cfg.atom_update, return_fallback=True)
        fallbacks += fb
        f_new = objective(ensemble, sqrt_Y, state.X, state.D, state.Z, state.mu, state.rho)
        trace.append(f_new)
        if record_blocks:
            blocks.append((f_z, f_x, f_new))
        if cfg.tol > 0 and (f - f_new) <= cfg.tol * f:
            break
        f = f_new
    state.objective_trace = np.array(trace)
    state.block_trace = np.array(blocks) if record_blocks else None
    state.fallbacks = fallbacks
    return state


class SCPrime(TransformerMixin, BaseEstimator):
    """Dictionary-sparsity phase retrieval as a transformer.

    Rows of the input are samples: ``fit(Y)`` takes a (P, M) intensity
    array, one row per signal, all measured by the same ``ensemble``.

    Parameters
    ----------
    ensemble : MeasurementEnsemble
    n_atoms : int
        Dictionary size L (must be below the number of samples).
    mu, rho : float
        Model weights; ``rho="auto"`` uses ``0.1 * mu * max|D^H X|`` at init.
    max_iter : int
    e_bound_rule : {"atom-count", "power-iteration"}
    random_state : int or None

    Attributes
    ----------
    signals_ : ndarray of shape (P, N)
        Recovered signals, one per row.
    components_ : ndarray of shape (L, N)
        Dictionary atoms, one per row.
    codes_ : ndarray of shape (P, L)
    objective_trace_ : ndarray
    rho_ : float
    """

    def __init__(self, ensemble=None, n_atoms=128, mu=0.5, rho="auto", max_iter=100,
                 e_bound_rule="atom-count", tol=0.0, random_state=None):
        self.ensemble = ensemble
        self.n_atoms = n_atoms
        self.mu = mu
        self.rho = rho
        self.max_iter = max_iter
        self.e_bound_rule = e_bound_rule
        self.tol = tol
        self.random_state = random_state

    def _config(self):
        rho = None if self.rho == "auto" else self.rho
        return ScprimeConfig(mu=self.mu, rho=rho, max_iter=self.max_iter, n_atoms=self.n_atoms,
                             e_bound_rule=self.e_bound_rule, tol=self.tol,
                             rng_seed=self.random_state)

    def _magnitudes(self, Y):
        if self.ensemble is None:
            raise ConfigError("SCPrime needs a measurement ensemble")
        Y = np.asarray(Y)
        if np.iscomplexobj(Y) or Y.ndim != 2:
            raise ConfigError("expected a real 2-D intensity array of shape (n_samples, M)")
        if Y.shape[1] != self.ensemble.m:
            raise ConfigError(f"expected {self.ensemble.m} intensities per sample, got {Y.shape[1]}")
        if not np.all(np.isfinite(Y)):
            raise ConfigError("intensities must be finite")
        return np.sqrt(np.maximum(Y.astype(np.float64), 0.0)).T

    def fit(self, Y, _=None):
        state = solve_scprime(self.ensemble, self._magnitudes(Y), self._config())
        self.state_ = state
        self.signals_ = state.X.T
        self.components_ = state.D.T
        self.codes_ = state.Z.T
        self.objective_trace_ = state.objective_trace
        self.rho_ = state.rho
        self.n_iter_ = state.n_iter
        return self

    def transform(self, Y):
        """Recover signals for new data, starting from the learned dictionary."""
        check_is_fitted(self, "state_")
        sqrt_Y = self._magnitudes(Y)
        cfg = self._config()
        rng = check_random_state(self.random_state)
        n, p = self.ensemble.n, sqrt_Y.shape[1]
        X = (rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))) / np.sqrt(2.0)
        D = self.state_.D
        Z = np.linalg.pinv(D.conj().T @ D) @ (D.conj().T @ X)
        init = ScprimeState(X, D, Z, self.rho_, self.mu)
        return solve_scprime(self.ensemble, sqrt_Y, cfg, init=init).X.T

    def fit_transform(self, Y, _=None):
        return self.fit(Y).signals_

    def inverse_transform(self, codes):
        """Signals implied by codes, ``codes @ components_``."""
        check_is_fitted(self, "state_")
        return np.asarray(codes) @ self.components_
