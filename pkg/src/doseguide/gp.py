"""Shared Gaussian-process numerics.

Squared-exponential kernels in precision form (per-dimension rates, one
precision scalar for the process variance), Gram assembly with diagonal
jitter, Cholesky-backed solves, the log marginal likelihood of a zero-mean
GP over residuals, and a deterministic grid search for hyperparameters.

Conventions: the kernel itself is unnormalized, k(x, x) = 1, and the process
covariance is k(.,.)/precision.  All rates and the precision are strictly
positive.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import DoseguideError, FactorizationError

DEFAULT_JITTER = 1e-8


@dataclass(frozen=True)
class SEKernelParams:
    """Rates (one per input dimension) and precision of an SE-kernel GP."""

    rates: np.ndarray
    precision: float

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        object.__setattr__(self, "rates", rates)
        if rates.ndim != 1 or rates.size == 0:
            raise ValueError("rates must be a non-empty 1-d array")
        if not np.all(np.isfinite(rates)) or np.any(rates <= 0):
            raise ValueError("rates must be positive and finite")
        if not (self.precision > 0 and math.isfinite(self.precision)):
            raise ValueError("precision must be positive and finite")

    @property
    def ndim(self):
        return self.rates.size

    @classmethod
    def isotropic(cls, rate, ndim, precision):
        return cls(np.full(ndim, float(rate)), float(precision))


def se_kernel(x, x_prime, params: SEKernelParams) -> float:
    """Product-form squared-exponential kernel between two input vectors."""
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != x_prime.shape or x.shape != (params.ndim,):
        raise ValueError(
            f"dimension mismatch: x {x.shape}, x' {x_prime.shape}, "
            f"rates ({params.ndim},)"
        )
    return float(np.exp(-np.sum(params.rates * (x - x_prime) ** 2)))


def se_cross(X, Z, rates) -> np.ndarray:
    """Kernel matrix k(X_i, Z_j) for row-stacked inputs."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    rates = np.asarray(rates, dtype=float)
    if X.shape[1] != rates.size or Z.shape[1] != rates.size:
        raise ValueError("input dimension does not match the number of rates")
    d2 = ((X[:, None, :] - Z[None, :, :]) ** 2 * rates).sum(axis=-1)
    return np.exp(-d2)


@dataclass(frozen=True)
class GramMatrix:
    """Jittered SE Gram matrix with its cached lower Cholesky factor."""

    entries: np.ndarray
    jitter: float
    chol_lower: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def log_det(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol_lower))))


def _cholesky_lower(K):
    L, info = lapack.dpotrf(K, lower=1, clean=1)
    if info > 0:
        raise FactorizationError(pivot=info - 1)
    if info < 0:
        raise ValueError(f"illegal value in argument {-info} of dpotrf")
    return L


def gram(points, params: SEKernelParams, jitter=DEFAULT_JITTER) -> GramMatrix:
    """Assemble the SE Gram matrix over points and factorize it."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    K = se_cross(points, points, params.rates)
    K[np.diag_indices_from(K)] += jitter
    return GramMatrix(entries=K, jitter=float(jitter), chol_lower=_cholesky_lower(K))


def gram_from_matrix(K, jitter=0.0) -> GramMatrix:
    """Factorize a precomputed symmetric kernel matrix (jitter added here)."""
    K = np.asarray(K, dtype=float).copy()
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("K must be square")
    K[np.diag_indices_from(K)] += jitter
    return GramMatrix(entries=K, jitter=float(jitter), chol_lower=_cholesky_lower(K))


def solve(gm: GramMatrix, rhs) -> np.ndarray:
    """Solve gm @ x = rhs through the cached Cholesky factor."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != gm.n:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, Gram matrix has {gm.n}")
    y = solve_triangular(gm.chol_lower, rhs, lower=True)
    return solve_triangular(gm.chol_lower, y, lower=True, trans="T")


def gram_inverse(gm: GramMatrix) -> np.ndarray:
    return solve(gm, np.eye(gm.n))


def log_marginal_likelihood(residuals, gm: GramMatrix, precision) -> float:
    """Log density of residuals under a zero-mean GP with covariance K/precision."""
    r = np.asarray(residuals, dtype=float)
    if r.shape != (gm.n,):
        raise ValueError(f"residual length {r.shape} does not match n={gm.n}")
    quad = precision * float(r @ solve(gm, r))
    log_det = gm.log_det - gm.n * math.log(precision)
    return -0.5 * quad - 0.5 * log_det - 0.5 * gm.n * math.log(2.0 * math.pi)


def _default_rate_grid():
    return tuple(np.logspace(-2, 2, 7))


def _default_precision_grid():
    return tuple(np.logspace(-1, 2, 7))


@dataclass(frozen=True)
class GridSpec:
    """Deterministic hyperparameter search space.

    The base pass scans an isotropic (shared-rate x precision) grid.  With
    ``anisotropic`` set, a single coordinate-ascent pass then re-scans the
    rate grid per input dimension.  With ``refine`` set, one refinement round
    re-scans each axis on a finer log-spaced grid bracketing the incumbent.
    """

    rate_grid: tuple = field(default_factory=_default_rate_grid)
    precision_grid: tuple = field(default_factory=_default_precision_grid)
    anisotropic: bool = False
    refine: bool = True
    refine_points: int = 5

    def __post_init__(self):
        if len(self.rate_grid) == 0 or len(self.precision_grid) == 0:
            raise ValueError("grid axes must be nonempty")
        if any(v <= 0 for v in self.rate_grid) or any(
            v <= 0 for v in self.precision_grid
        ):
            raise ValueError("grid values must be positive")

    def to_dict(self):
        return {
            "rate_grid": [float(v) for v in self.rate_grid],
            "precision_grid": [float(v) for v in self.precision_grid],
            "anisotropic": self.anisotropic,
            "refine": self.refine,
            "refine_points": self.refine_points,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            rate_grid=tuple(d["rate_grid"]),
            precision_grid=tuple(d["precision_grid"]),
            anisotropic=bool(d["anisotropic"]),
            refine=bool(d["refine"]),
            refine_points=int(d["refine_points"]),
        )


def _axis_step(axis_grid):
    if len(axis_grid) < 2:
        return 10.0 ** (2.0 / 3.0)
    return (max(axis_grid) / min(axis_grid)) ** (1.0 / (len(axis_grid) - 1))


class _Search:
    """Tracks the incumbent; ties keep the earliest-evaluated candidate."""

    def __init__(self, objective):
        self.objective = objective
        self.best_value = -math.inf
        self.best_params = None
        self.failures = 0
        self.last_error = None

    def consider(self, params):
        try:
            value = self.objective(params)
        except FactorizationError as exc:
            self.failures += 1
            self.last_error = exc
            return
        if not math.isfinite(value):
            return
        if value > self.best_value:
            self.best_value = value
            self.best_params = params


def search_hyperparams(objective, ndim, grid: GridSpec) -> SEKernelParams:
    """Maximize an objective(SEKernelParams) -> float over the grid.

    Used both for the regression marginal likelihood and the Laplace
    approximate marginal of the classifiers; evaluation order is fixed so
    tie-breaking is deterministic (smallest grid index wins).
    """
    search = _Search(objective)
    for rate in grid.rate_grid:
        for prec in grid.precision_grid:
            search.consider(SEKernelParams.isotropic(rate, ndim, prec))
    if search.best_params is None:
        if search.last_error is not None:
            raise search.last_error
        raise DoseguideError("hyperparameter search found no finite objective value")

    if grid.anisotropic and ndim > 1:
        for k in range(ndim):
            base = search.best_params
            for rate in grid.rate_grid:
                rates = base.rates.copy()
                rates[k] = rate
                search.consider(SEKernelParams(rates, base.precision))

    if grid.refine:
        _refine(search, ndim, grid)
    return search.best_params


def _refine_axis(center, axis_grid, points):
    """Log-spaced bracket around the incumbent, clipped to the grid's span."""
    step = _axis_step(axis_grid)
    lo = max(center / step, min(axis_grid))
    hi = min(center * step, max(axis_grid))
    return np.geomspace(lo, hi, points)


def _refine(search, ndim, grid):
    rate_axes = range(ndim) if grid.anisotropic and ndim > 1 else (None,)
    for k in rate_axes:
        base = search.best_params
        center = base.rates[k if k is not None else 0]
        for rate in _refine_axis(center, grid.rate_grid, grid.refine_points):
            if k is None:
                rates = np.full(ndim, rate)
            else:
                rates = base.rates.copy()
                rates[k] = rate
            search.consider(SEKernelParams(rates, base.precision))
    base = search.best_params
    for prec in _refine_axis(
        base.precision, grid.precision_grid, grid.refine_points
    ):
        search.consider(SEKernelParams(base.rates, float(prec)))


def fit_hyperparams(
    inputs, residuals, grid: GridSpec, jitter=DEFAULT_JITTER
) -> SEKernelParams:
    """Grid-search SE hyperparameters maximizing the marginal likelihood."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    residuals = np.asarray(residuals, dtype=float)
    if inputs.shape[0] < 3:
        raise ValueError("need at least 3 samples to fit hyperparameters")
    if residuals.shape[0] != inputs.shape[0]:
        raise ValueError("inputs and residuals disagree on sample count")

    def objective(params):
        gm = gram(inputs, params, jitter)
        return log_marginal_likelihood(residuals, gm, params.precision)

    return search_hyperparams(objective, inputs.shape[1], grid)
