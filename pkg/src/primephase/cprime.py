"""C-PRIME: MM phase retrieval for signals sparse in the standard basis.

Minimizes ``||sqrt(y) - |A x|||_2^2 + rho ||x||_1``. Each MM step solves the
isotropic quadratic surrogate in closed form with a complex soft-threshold;
SQUAREM extrapolation accelerates the iteration and an objective
backtracking loop keeps the descent property.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (ConfigError, check_complex_vector, check_count, check_magnitudes,
                          check_nonnegative, check_random_state)
from .measurements import IntensitySamples
from .prox import MajorizerParams, soft_threshold

__all__ = [
    "CprimeConfig", "CprimeState", "SquaremScratch", "PathResult", "CPrime",
    "objective", "surrogate", "default_rho", "mm_step", "squarem_step", "solve_cprime",
    "solve_cprime_path", "DEFAULT_RHO_PATH", "MAX_BACKTRACKS",
]

MAX_BACKTRACKS = 60
# relative slack used when asserting descent in floating point
DESCENT_SLACK = 1e-9
DEFAULT_RHO_PATH = (0.03, 3e-3, 3e-4, 1e-4)


@dataclass(frozen=True)
class CprimeConfig:
    """Solver settings.

    ``rho=None`` selects ``rho_factor * ||A^H sqrt(y)||_inf``. ``c_bound=None``
    uses the ensemble's own spectral bound. ``tol=0`` runs all ``max_iter``
    iterations; otherwise iteration stops once the relative objective
    decrease falls to ``tol`` or below.
    """

    rho: float = None
    max_iter: int = 1000
    c_bound: MajorizerParams = None
    tol: float = 0.0
    rng_seed: int = None
    rho_factor: float = 0.1
    # check the surrogate touching condition at every expansion point
    debug: bool = False

    def __post_init__(self):
        check_count(self.max_iter, "max_iter")
        check_nonnegative(self.tol, "tol")
        check_nonnegative(self.rho_factor, "rho_factor")
        if self.rho is not None:
            check_nonnegative(self.rho, "rho")


@dataclass(eq=False)
class CprimeState:
    """Result of a C-PRIME run.

    ``objective_trace[0]`` is the objective at the initial point and entry
    ``k`` the objective after outer iteration ``k``. ``exit_margins`` holds
    ``f(x2) - f(x3)`` when each backtracking loop exits (NaN when the
    extrapolation was skipped).
    """

    x: np.ndarray
    rho: float
    objective_trace: np.ndarray
    backtrack_counts: np.ndarray
    exit_margins: np.ndarray
    converged: bool = False

    @property
    def n_iter(self):
        return len(self.objective_trace) - 1

    @property
    def objective(self):
        return float(self.objective_trace[-1])


@dataclass(eq=False)
class SquaremScratch:
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    r: np.ndarray
    v: np.ndarray
    alpha: float
    alpha0: float
    f2: float
    f3: float
    accelerated: bool = True


def _sqrt_y(samples):
    if isinstance(samples, IntensitySamples):
        return samples.sqrt_y
    return np.asarray(samples, dtype=np.float64)


def _obj(sqrt_y, Ax, x, rho):
    return float(np.sum((sqrt_y - np.abs(Ax)) ** 2) + rho * np.sum(np.abs(x)))


def objective(ensemble, sqrt_y, x, rho):
    """``||sqrt(y) - |A x|||^2 + rho ||x||_1``."""
    return _obj(sqrt_y, ensemble.forward(x), x, rho)


def default_rho(ensemble, sqrt_y, factor=0.1):
    """Data-scaled l1 weight ``factor * ||A^H sqrt(y)||_inf``."""
    return float(factor * np.max(np.abs(ensemble.adjoint(np.asarray(sqrt_y, dtype=np.complex128)))))


def _mm(ensemble, sqrt_y, x, Ax, rho, C):
    c = x - ensemble.adjoint(Ax - sqrt_y * np.exp(1j * np.angle(Ax))) / C
    return soft_threshold(c, rho / (2.0 * C))


def surrogate(ensemble, sqrt_y, x, x_k, rho, c_bound):
    """Value at ``x`` of the quadratic-plus-l1 majorizer built at ``x_k``.

    The quadratic term ``||A x||^2`` is bounded by its linearization at
    ``x_k`` plus ``C ||x - x_k||^2`` and ``-sum sqrt(y) |A x|`` by its
    tangent through the phases of ``A x_k``.
    """
    C = _bound(c_bound)
    x = np.asarray(x, dtype=np.complex128)
    x_k = np.asarray(x_k, dtype=np.complex128)
    Ax, Ax_k = ensemble.forward(x), ensemble.forward(x_k)
    d = x - x_k
    quad = (np.sum(np.abs(Ax_k) ** 2) + 2.0 * np.real(np.vdot(d, ensemble.adjoint(Ax_k)))
            + C * np.sum(np.abs(d) ** 2))
    cross = 2.0 * np.real(np.vdot(sqrt_y * np.exp(1j * np.angle(Ax_k)), Ax))
    return float(np.sum(sqrt_y ** 2) + quad - cross + rho * np.sum(np.abs(x)))


def _bound(c_bound):
    return c_bound.bound if isinstance(c_bound, MajorizerParams) else float(c_bound)


def mm_step(ensemble, sqrt_y, x_in, rho, c_bound):
    """One MM update: soft-threshold of the surrogate's center ``c``."""
    x_in = np.asarray(x_in, dtype=np.complex128)
    return _mm(ensemble, sqrt_y, x_in, ensemble.forward(x_in), rho, _bound(c_bound))


def _squarem(ensemble, sqrt_y, x_k, Ax_k, rho, C):
    """SQUAREM step with backtracking; returns (x_next, Ax_next, f_next, backtracks, scratch)."""
    x1 = _mm(ensemble, sqrt_y, x_k, Ax_k, rho, C)
    Ax1 = ensemble.forward(x1)
    x2 = _mm(ensemble, sqrt_y, x1, Ax1, rho, C)
    Ax2 = ensemble.forward(x2)
    f2 = _obj(sqrt_y, Ax2, x2, rho)
    r = x1 - x_k
    v = x2 - x1 - r
    nv = np.linalg.norm(v)
    backtracks = 0
    # v at round-off level: x_k is (numerically) a fixed point, nothing to extrapolate
    if nv <= 1e-14 * np.linalg.norm(x_k):
        x3, Ax3, f3 = x2, Ax2, f2
        alpha = alpha0 = np.nan
        accelerated = False
    else:
        alpha = alpha0 = -np.linalg.norm(r) / nv
        x3 = x_k - 2.0 * alpha * r + alpha ** 2 * v
        Ax3 = ensemble.forward(x3)
        f3 = _obj(sqrt_y, Ax3, x3, rho)
        while f3 > f2:
            backtracks += 1
            alpha = (alpha - 1.0) / 2.0
            if alpha == -1.0 or backtracks >= MAX_BACKTRACKS:
                # alpha = -1 reproduces x2; snap to it exactly
                alpha = -1.0
                x3, Ax3, f3 = x2, Ax2, f2
                break
            x3 = x_k - 2.0 * alpha * r + alpha ** 2 * v
            Ax3 = ensemble.forward(x3)
            f3 = _obj(sqrt_y, Ax3, x3, rho)
        accelerated = True
    x_next = _mm(ensemble, sqrt_y, x3, Ax3, rho, C)
    Ax_next = ensemble.forward(x_next)
    f_next = _obj(sqrt_y, Ax_next, x_next, rho)
    scratch = SquaremScratch(x1, x2, x3, r, v, alpha, alpha0, f2, f3, accelerated)
    return x_next, Ax_next, f_next, backtracks, scratch


def squarem_step(ensemble, sqrt_y, x_k, config, return_scratch=False):
    """One accelerated outer iteration.

    Returns ``(x_next, backtracks)``, plus the :class:`SquaremScratch` when
    ``return_scratch`` is set. ``config.rho`` must be resolved (not None).
    """
    if config.rho is None:
        raise ConfigError("squarem_step needs an explicit rho")
    C = _bound(config.c_bound if config.c_bound is not None else ensemble.majorizer)
    x_k = np.asarray(x_k, dtype=np.complex128)
    x_next, _, _, bt, scratch = _squarem(ensemble, np.asarray(sqrt_y, dtype=np.float64),
                                         x_k, ensemble.forward(x_k), config.rho, C)
    if return_scratch:
        return x_next, bt, scratch
    return x_next, bt


def _initial_point(n, rng):
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)


def solve_cprime(ensemble, samples, config=None, x0=None):
    """Run C-PRIME for up to ``config.max_iter`` accelerated iterations.

    Parameters
    ----------
    ensemble : MeasurementEnsemble
    samples : IntensitySamples or array
        Intensity samples, or directly the magnitudes ``sqrt(y)``.
    config : CprimeConfig, optional
    x0 : array, optional
        Starting point; otherwise unit-variance complex Gaussian drawn from
        ``config.rng_seed``.
    """
    config = config or CprimeConfig()
    sqrt_y = check_magnitudes(_sqrt_y(samples), rows=ensemble.m)
    if sqrt_y.ndim != 1:
        raise ConfigError("solve_cprime takes a single measurement vector")
    rho = config.rho if config.rho is not None else default_rho(ensemble, sqrt_y, config.rho_factor)
    C = _bound(config.c_bound if config.c_bound is not None else ensemble.majorizer)
    if x0 is None:
        x = _initial_point(ensemble.n, check_random_state(config.rng_seed))
    else:
        x = check_complex_vector(x0, "x0", ensemble.n).copy()
    Ax = ensemble.forward(x)
    f = _obj(sqrt_y, Ax, x, rho)
    trace = [f]
    backtracks = []
    margins = []
    converged = False
    for _ in range(config.max_iter):
        if config.debug:
            g = surrogate(ensemble, sqrt_y, x, x, rho, C)
            if abs(g - f) > 1e-8 * max(1.0, f):
                raise AssertionError(f"surrogate does not touch the objective: {g!r} vs {f!r}")
        x, Ax, f_new, bt, scratch = _squarem(ensemble, sqrt_y, x, Ax, rho, C)
        trace.append(f_new)
        backtracks.append(bt)
        margins.append(scratch.f2 - scratch.f3 if scratch.accelerated else np.nan)
        if config.tol > 0 and (f - f_new) <= config.tol * f:
            converged = True
            break
        f = f_new
    return CprimeState(x, rho, np.array(trace), np.array(backtracks, dtype=int),
                       np.array(margins), converged)


@dataclass(eq=False)
class PathResult:
    """Outcome of a warm-started decreasing-rho path with random restarts.

    ``runs[i]`` lists the per-stage states of restart ``i``; ``best`` is the
    final-stage state with the lowest objective.
    """

    best: CprimeState
    best_restart: int
    runs: list = field(default_factory=list)

    @property
    def n_iter(self):
        return sum(s.n_iter for run in self.runs for s in run)


def solve_cprime_path(ensemble, samples, rho_factors=DEFAULT_RHO_PATH, restarts=4,
                      max_iter=300, tol=1e-8, rng_seed=None, polish=False):
    """Solve along a decreasing sequence of l1 weights, warm-starting each stage.

    Each weight is ``factor * ||A^H sqrt(y)||_inf``. Every restart begins from
    a fresh random point; the restart whose final stage reaches the lowest
    objective wins. Selection uses only the measurements. With ``polish`` the
    winner gets one more stage at ``rho = 0`` to remove the l1 shrinkage bias;
    that stage is appended to its run and becomes ``best``.
    """
    sqrt_y = check_magnitudes(_sqrt_y(samples), rows=ensemble.m)
    restarts = check_count(restarts, "restarts")
    if not rho_factors:
        raise ConfigError("rho_factors must be non-empty")
    scale = default_rho(ensemble, sqrt_y, 1.0)
    rng = check_random_state(rng_seed)
    runs = []
    best = None
    best_restart = -1
    for i in range(restarts):
        x = _initial_point(ensemble.n, rng)
        stages = []
        for factor in rho_factors:
            cfg = CprimeConfig(rho=check_nonnegative(factor, "rho factor") * scale,
                               max_iter=max_iter, tol=tol)
            state = solve_cprime(ensemble, sqrt_y, cfg, x0=x)
            stages.append(state)
            x = state.x
        runs.append(stages)
        if best is None or stages[-1].objective < best.objective:
            best, best_restart = stages[-1], i
    if polish:
        best = solve_cprime(ensemble, sqrt_y, CprimeConfig(rho=0.0, max_iter=max_iter, tol=tol),
                            x0=best.x)
        runs[best_restart].append(best)
    return PathResult(best, best_restart, runs)


class CPrime(BaseEstimator):
    """Sparse phase retrieval estimator.

    ``fit(y)`` recovers one signal from its intensity vector ``y`` (length
    M); ``transform(Y)`` recovers one signal per row of ``Y``.

    Parameters
    ----------
    ensemble : MeasurementEnsemble
        The measurement operator.
    rho : float or "auto"
        l1 weight; "auto" uses ``rho_factor * ||A^H sqrt(y)||_inf``.
    rho_path : sequence of float, optional
        If given, solve along these decreasing factors of
        ``||A^H sqrt(y)||_inf`` with warm starts instead of a single weight.
    n_restarts : int
        Random restarts for the path solver, best objective kept.
    max_iter, tol : see :class:`CprimeConfig` (per stage for the path).
    random_state : int or None

    Attributes
    ----------
    signal_ : ndarray of shape (N,)
    objective_trace_ : ndarray
    backtrack_counts_ : ndarray
    n_iter_ : int
    rho_ : float
    """

    def __init__(self, ensemble=None, rho="auto", rho_factor=0.1, rho_path=None,
                 n_restarts=1, max_iter=1000, tol=0.0, random_state=None):
        self.ensemble = ensemble
        self.rho = rho
        self.rho_factor = rho_factor
        self.rho_path = rho_path
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def _check_intensities(self, y):
        if self.ensemble is None:
            raise ConfigError("CPrime needs a measurement ensemble")
        y = np.asarray(y)
        if np.iscomplexobj(y):
            raise ConfigError("intensities must be real")
        y = y.astype(np.float64)
        if y.shape[-1] != self.ensemble.m:
            raise ConfigError(f"expected {self.ensemble.m} intensities per sample, got {y.shape[-1]}")
        if not np.all(np.isfinite(y)):
            raise ConfigError("intensities must be finite")
        # negative intensities are discarded the same way synthesize does
        return np.sqrt(np.maximum(y, 0.0))

    def _solve(self, sqrt_y, seed):
        if self.rho_path is not None:
            result = solve_cprime_path(self.ensemble, sqrt_y, tuple(self.rho_path),
                                       self.n_restarts, self.max_iter, self.tol, seed)
            return result.best
        rho = None if self.rho == "auto" else check_nonnegative(self.rho, "rho")
        cfg = CprimeConfig(rho=rho, max_iter=self.max_iter, tol=self.tol,
                           rho_factor=self.rho_factor, rng_seed=seed)
        return solve_cprime(self.ensemble, sqrt_y, cfg)

    def fit(self, y, _=None):
        sqrt_y = self._check_intensities(y)
        if sqrt_y.ndim != 1:
            raise ConfigError("fit takes a single intensity vector; use transform for batches")
        state = self._solve(sqrt_y, self.random_state)
        self.signal_ = state.x
        self.objective_trace_ = state.objective_trace
        self.backtrack_counts_ = state.backtrack_counts
        self.n_iter_ = state.n_iter
        self.rho_ = state.rho
        return self

    def transform(self, Y):
        """Recover a signal for every row of ``Y`` (independent solves)."""
        sqrt_Y = np.atleast_2d(self._check_intensities(Y))
        rng = check_random_state(self.random_state)
        seeds = rng.integers(0, 2 ** 63, size=sqrt_Y.shape[0])
        return np.stack([self._solve(row, int(s)).x for row, s in zip(sqrt_Y, seeds)])

    def predict_intensities(self):
        """Intensities ``|A x|^2`` implied by the fitted signal."""
        check_is_fitted(self, "signal_")
        return np.abs(self.ensemble.forward(self.signal_)) ** 2


def with_rho(config, rho):
    return replace(config, rho=rho)
