"""
Bivariate generalised Gaussian density, sampler and maximum-likelihood fit.

The density is parametrised by the shape p, the polar pair (rho, phi) that
fixes a trace-2 covariance Sigma, and the scale m. The scale has a closed-form
maximiser, so the likelihood is profiled to F(p, phi, rho) and minimised over
the compact box [p_min, p_max] x [0, 2pi) x [0, rho_cap] by a coarse grid
followed by bounded Nelder-Mead refinement.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.optimize import minimize
from scipy.special import gammaln

from config.config import settings
from core.errors import DegenerateSamplesError, DomainError
from core.types import TWO_PI, BggdParams, GradientField, Image, ParamMaps, sigma_from_polar
from restoration.operators import central_difference

logger = logging.getLogger(__name__)

_LOG_PI = math.log(math.pi)
_LOG_2 = math.log(2.0)


class SampleSet(BaseModel):
    """N two-dimensional gradient samples stored as an (N, 2) array."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray

    @field_validator("x", mode="before")
    @classmethod
    def _check_samples(cls, value):
        x = np.asarray(value, dtype=np.float64)
        if x.ndim == 1 and x.shape == (2,):
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != 2 or x.shape[0] < 1:
            raise DomainError(f"Samples must form an (N, 2) array, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("Samples must be finite")
        return x

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @classmethod
    def from_gradients(cls, field: GradientField) -> "SampleSet":
        return cls(x=field.vectors())

    def rotated(self, alpha: float) -> "SampleSet":
        """Samples rotated counter-clockwise by alpha."""
        c, s = math.cos(alpha), math.sin(alpha)
        return SampleSet(x=self.x @ np.array([[c, s], [-s, c]]))


class EstimatorConfig(BaseModel):
    """Bounds, grid and budget of the constrained ML fit."""

    model_config = ConfigDict(frozen=True)

    p_min: float = Field(default_factory=lambda: settings.P_MIN)
    p_max: float = Field(default_factory=lambda: settings.P_MAX_BENCH)
    rho_cap: float = Field(default_factory=lambda: settings.RHO_CAP)
    n_p: int = Field(default_factory=lambda: settings.GRID_P)
    n_phi: int = Field(default_factory=lambda: settings.GRID_PHI)
    n_rho: int = Field(default_factory=lambda: settings.GRID_RHO)
    refine_tol: float = Field(default_factory=lambda: settings.REFINE_TOL)
    max_evals: int = Field(default_factory=lambda: settings.MAX_EVALS)
    degeneracy_tol: float = Field(default_factory=lambda: settings.DEGENERACY_TOL)
    n_starts: int = 3

    @model_validator(mode="after")
    def _check_invariants(self):
        if not 0 < self.p_min < self.p_max:
            raise DomainError(f"Need 0 < p_min < p_max, got [{self.p_min}, {self.p_max}]")
        if not 0 < self.rho_cap < 1:
            raise DomainError(f"rho_cap must lie in (0, 1), got {self.rho_cap}")
        if min(self.n_p, self.n_phi, self.n_rho) < 2:
            raise DomainError("Grid sizes must be at least 2")
        if self.refine_tol <= 0 or self.degeneracy_tol <= 0:
            raise DomainError("Tolerances must be positive")
        if self.max_evals < 1 or self.n_starts < 1:
            raise DomainError("max_evals and n_starts must be positive")
        return self

    @classmethod
    def for_restoration(cls, **overrides) -> "EstimatorConfig":
        """Exponent range used for regularisation maps, [P_MIN, P_MAX_RESTORE]."""
        return cls(**{"p_max": settings.P_MAX_RESTORE, **overrides})

    @classmethod
    def for_benchmark(cls, **overrides) -> "EstimatorConfig":
        return cls(**{"p_max": settings.P_MAX_BENCH, **overrides})


def _as_array(samples) -> np.ndarray:
    if isinstance(samples, SampleSet):
        return samples.x
    return SampleSet(x=samples).x


def _quadratic_form(x: np.ndarray, rho: float, phi: float) -> np.ndarray:
    """x^T Sigma^{-1}(rho, phi) x for every row of x."""
    c = rho * math.cos(phi)
    s = rho * math.sin(phi)
    x1 = x[..., 0]
    x2 = x[..., 1]
    quad = ((1.0 + c) * x1 * x1 - 2.0 * s * x1 * x2 + (1.0 - c) * x2 * x2) / (1.0 - rho * rho)
    return np.maximum(quad, 0.0)


def _log_normaliser(p: float, rho: float, m: float) -> float:
    return math.log(p) - _LOG_PI - _LOG_2 - gammaln(2.0 / p) - (2.0 / p) * _LOG_2 - math.log(m) - 0.5 * math.log1p(-rho * rho)


def bggd_logpdf(x, params: BggdParams) -> np.ndarray:
    """Log-density at x, an array whose last axis has length 2."""
    x = np.asarray(x, dtype=np.float64)
    quad = _quadratic_form(x, params.rho, params.phi)
    log_norm = _log_normaliser(params.p, params.rho, params.m)
    value = log_norm - np.power(quad, params.p / 2.0) / (2.0 * params.m ** (params.p / 2.0))
    if np.ndim(value) == 0:
        return float(value)
    return value


def bggd_pdf(x, params: BggdParams) -> np.ndarray:
    """Density p / (2 pi Gamma(2/p) 2^{2/p} m |Sigma|^{1/2}) exp(-Q^{p/2} / (2 m^{p/2}))."""
    value = np.exp(bggd_logpdf(x, params))
    if np.ndim(value) == 0:
        return float(value)
    return value


def sample_bggd(params: BggdParams, n: int, seed: Union[int, np.random.SeedSequence]) -> SampleSet:
    """Draw n samples as T^{1/p} Sigma^{1/2} u.

    u is uniform on the unit circle and T ~ Gamma(shape 2/p, scale 2 m^{p/2}),
    which is the law of (x^T Sigma^{-1} x)^{p/2} under the density.

    Args:
        params: Distribution parameters
        n: Number of samples, >= 1
        seed: Integer or SeedSequence for the numpy Generator; equal seeds
            give equal samples

    Returns:
        SampleSet of n samples
    """
    if n < 1:
        raise DomainError(f"Sample count must be positive, got {n}")
    rng = np.random.default_rng(seed)
    p = params.p
    radial = rng.gamma(shape=2.0 / p, scale=2.0 * params.m ** (p / 2.0), size=n) ** (1.0 / p)
    angle = rng.uniform(0.0, TWO_PI, size=n)
    directions = np.stack([np.cos(angle), np.sin(angle)], axis=1)
    evals, evecs = np.linalg.eigh(params.sigma)
    sigma_half = evecs @ np.diag(np.sqrt(evals)) @ evecs.T
    return SampleSet(x=radial[:, None] * (directions @ sigma_half.T))


def scale_mle(p: float, sigma_inv, samples) -> float:
    """Closed-form scale maximiser m* = ((p / 4N) sum_j Q_j^{p/2})^{2/p}.

    Raises:
        DomainError: If every sample is zero, where the scale is undefined
    """
    x = _as_array(samples)
    if not p > 0:
        raise DomainError(f"Shape exponent p must be positive, got {p}")
    sigma_inv = np.asarray(sigma_inv, dtype=np.float64)
    quad = np.maximum(np.einsum("ni,ij,nj->n", x, sigma_inv, x), 0.0)
    total = float(np.sum(np.power(quad, p / 2.0)))
    if total <= 0.0:
        raise DomainError("Scale is undefined when all samples are zero")
    return (p * total / (4.0 * x.shape[0])) ** (2.0 / p)


def neg_log_likelihood(p: float, phi: float, rho: float, samples) -> float:
    """Profiled negative log-likelihood F(p, phi, rho) with m = m*(p, Sigma).

    Raises:
        DomainError: If rho lies outside [0, 1), p is not positive or all
            samples are zero
    """
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"Polar radius rho must lie in [0, 1), got {rho}")
    if not p > 0:
        raise DomainError(f"Shape exponent p must be positive, got {p}")
    value = _profiled_likelihood(_as_array(samples), p, phi, rho)
    if not np.isfinite(value):
        raise DomainError("Likelihood is unbounded when all samples are zero")
    return value


def _profiled_likelihood(x: np.ndarray, p: float, phi: float, rho: float) -> float:
    # unvalidated array-level F; inf when every sample is zero
    total = float(np.sum(np.power(_quadratic_form(x, rho, phi), p / 2.0)))
    if total <= 0.0:
        return math.inf
    return float(_profiled_value(p, rho, total, x.shape[0]))


def _profiled_value(p, rho, total, n):
    constant = 0.5 * np.log1p(-rho * rho) + _LOG_PI + gammaln(2.0 / p + 1.0) + (2.0 / p) * _LOG_2
    return n * constant + (2.0 * n / p) * np.log(p * total / (4.0 * n)) + 2.0 * n / p


def detect_degenerate(samples, degeneracy_tol: Optional[float] = None) -> bool:
    """True iff all samples lie numerically on one line through the origin."""
    tol = settings.DEGENERACY_TOL if degeneracy_tol is None else degeneracy_tol
    x = _as_array(samples)
    singular = np.linalg.svd(x, compute_uv=False)
    if singular[0] == 0.0 or singular.size < 2:
        return True
    return bool(singular[-1] / singular[0] < tol)


class _GridSearch:
    """Profiled likelihood on the coarse (p, phi, rho) grid."""

    def __init__(self, x: np.ndarray, config: EstimatorConfig):
        self.p = np.linspace(config.p_min, config.p_max, config.n_p)
        self.phi = TWO_PI * np.arange(config.n_phi) / config.n_phi
        self.rho = np.linspace(0.0, config.rho_cap, config.n_rho)
        self.x = x

    def evaluate(self) -> np.ndarray:
        n = self.x.shape[0]
        x1 = self.x[:, 0]
        x2 = self.x[:, 1]
        radius_sq = x1 * x1 + x2 * x2
        spread = x1 * x1 - x2 * x2
        cross = x1 * x2
        values = np.empty((self.p.size, self.phi.size, self.rho.size))
        half_p = self.p[:, None] / 2.0
        for j, phi in enumerate(self.phi):
            mixed = math.cos(phi) * spread - 2.0 * math.sin(phi) * cross
            for k, rho in enumerate(self.rho):
                quad = np.maximum((radius_sq + rho * mixed) / (1.0 - rho * rho), 0.0)
                totals = np.sum(np.power(quad[None, :], half_p), axis=1)
                with np.errstate(divide="ignore"):
                    values[:, j, k] = _profiled_value(self.p, rho, totals, n)
        return np.where(np.isfinite(values), values, np.inf)

    def node(self, flat_index: int) -> Tuple[float, float, float]:
        i, j, k = np.unravel_index(flat_index, (self.p.size, self.phi.size, self.rho.size))
        return float(self.p[i]), float(self.phi[j]), float(self.rho[k])


def _initial_simplex(start: Tuple[float, float, float], config: EstimatorConfig) -> np.ndarray:
    steps = (
        (config.p_max - config.p_min) / config.n_p,
        TWO_PI / config.n_phi,
        config.rho_cap / config.n_rho,
    )
    lower = (config.p_min, -np.inf, 0.0)
    upper = (config.p_max, np.inf, config.rho_cap)
    simplex = [np.array(start)]
    for axis, step in enumerate(steps):
        vertex = np.array(start)
        vertex[axis] = start[axis] + step if start[axis] + step <= upper[axis] else start[axis] - step
        vertex[axis] = min(max(vertex[axis], lower[axis]), upper[axis])
        simplex.append(vertex)
    return np.array(simplex)


def estimate(samples, config: Optional[EstimatorConfig] = None) -> BggdParams:
    """Constrained ML estimate of (p, phi, rho) and the matching scale m*.

    The coarse grid is scanned first; the n_starts best nodes seed bounded
    Nelder-Mead runs (phi is left free and wrapped afterwards). The candidate
    with the smallest profiled likelihood wins, so the result is never worse
    than the best grid node.

    Args:
        samples: SampleSet or (N, 2) array with N >= 2
        config: Bounds, grid sizes and budget

    Returns:
        BggdParams with phi wrapped into [0, 2pi)

    Raises:
        DegenerateSamplesError: If the samples are collinear through the origin
    """
    config = config or EstimatorConfig()
    x = _as_array(samples)
    if x.shape[0] < 2:
        raise DomainError(f"At least two samples are required, got {x.shape[0]}")
    if detect_degenerate(x, config.degeneracy_tol):
        raise DegenerateSamplesError("Samples lie on a line through the origin; the likelihood is unbounded")

    grid = _GridSearch(x, config)
    values = grid.evaluate()
    order = np.argsort(values, axis=None, kind="stable")
    best_value = float(values.flat[order[0]])
    best_point = grid.node(int(order[0]))

    bounds = [(config.p_min, config.p_max), (None, None), (0.0, config.rho_cap)]

    def objective(theta: np.ndarray) -> float:
        p, phi, rho = theta
        if not (config.p_min <= p <= config.p_max and 0.0 <= rho <= config.rho_cap):
            return np.inf
        return _profiled_likelihood(x, p, phi, rho)

    for flat in order[: config.n_starts]:
        start = grid.node(int(flat))
        result = minimize(
            objective,
            np.array(start),
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "initial_simplex": _initial_simplex(start, config),
                "maxfev": config.max_evals,
                "xatol": config.refine_tol,
                "fatol": config.refine_tol * max(1.0, abs(best_value)),
            },
        )
        if np.isfinite(result.fun) and result.fun < best_value:
            best_value = float(result.fun)
            best_point = tuple(float(v) for v in result.x)

    p, phi, rho = best_point
    rho = min(max(rho, 0.0), config.rho_cap)
    phi = phi % TWO_PI
    m = scale_mle(p, sigma_from_polar(rho, phi)[1], x)
    logger.debug(f"Estimated p={p:.4f} phi={phi:.4f} rho={rho:.4f} m={m:.3e} (F={best_value:.6f})")
    return BggdParams(p=p, phi=phi, rho=rho, m=m)


def _fallback(x: np.ndarray) -> Tuple[float, float, float, float]:
    try:
        m = scale_mle(2.0, np.eye(2), x)
    except DomainError:
        m = settings.M_FLOOR
    return 2.0, 0.0, 0.0, m


def _estimate_row(args) -> Tuple[np.ndarray, int]:
    windows_x, windows_y, config = args
    width = windows_x.shape[0]
    out = np.empty((width, 4))
    fallbacks = 0
    for col in range(width):
        x = np.stack([windows_x[col].ravel(), windows_y[col].ravel()], axis=1)
        try:
            params = estimate(x, config)
            out[col] = (params.p, params.phi, params.rho, params.m)
        except DegenerateSamplesError:
            out[col] = _fallback(x)
            fallbacks += 1
    return out, fallbacks


def neighborhood_windows(image: Image, half_width: int) -> Tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients gathered over periodic (2h+1)^2 windows.

    Returns:
        Two arrays of shape (H, W, 2h+1, 2h+1), the x and y components
    """
    gx, gy = central_difference(image.data)
    size = 2 * half_width + 1
    padded_x = np.pad(gx, half_width, mode="wrap")
    padded_y = np.pad(gy, half_width, mode="wrap")
    return sliding_window_view(padded_x, (size, size)), sliding_window_view(padded_y, (size, size))


def estimate_maps(
    image: Image,
    half_width: Optional[int] = None,
    config: Optional[EstimatorConfig] = None,
    workers: Optional[int] = None,
) -> ParamMaps:
    """Per-pixel BGGD fit over sliding neighborhoods of gradient samples.

    Degenerate neighborhoods fall back to the isotropic Gaussian (p=2, rho=0)
    with m from scale_mle under Sigma = I, or M_FLOOR when every sample is
    zero. Rows are independent; with workers > 1 they are spread over a
    process pool and the result does not depend on the worker count.

    Args:
        image: Input image
        half_width: Neighborhood radius h, windows are (2h+1) x (2h+1)
        config: Estimator configuration
        workers: Number of worker processes

    Returns:
        ParamMaps of the image's shape
    """
    half_width = settings.HALF_WIDTH if half_width is None else half_width
    config = config or EstimatorConfig.for_restoration()
    workers = settings.WORKERS if workers is None else workers
    if half_width < 1:
        raise DomainError(f"Neighborhood radius must be at least 1, got {half_width}")

    windows_x, windows_y = neighborhood_windows(image, half_width)
    height = image.height
    logger.info(
        f"Estimating parameter maps for {image.width}x{height} image, "
        f"{2 * half_width + 1}x{2 * half_width + 1} neighborhoods, workers={workers}"
    )
    jobs = [(windows_x[row], windows_y[row], config) for row in range(height)]
    rows: List[Tuple[np.ndarray, int]] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row, result in enumerate(pool.map(_estimate_row, jobs)):
                rows.append(result)
                logger.debug(f"Estimated row {row + 1}/{height}")
    else:
        for row, job in enumerate(jobs):
            rows.append(_estimate_row(job))
            logger.debug(f"Estimated row {row + 1}/{height}")

    stacked = np.stack([values for values, _ in rows])
    fallbacks = sum(count for _, count in rows)
    if fallbacks:
        logger.warning(f"{fallbacks} degenerate neighborhoods fell back to isotropic Gaussian parameters")
    maps = ParamMaps(p=stacked[..., 0], phi=stacked[..., 1], rho=stacked[..., 2], m=stacked[..., 3])
    logger.info(
        f"Parameter maps: median p={np.median(maps.p):.3f}, median e1={np.median(maps.e1):.3f}, "
        f"fallbacks={fallbacks}"
    )
    return maps


def estimate_global(image: Image, config: Optional[EstimatorConfig] = None) -> BggdParams:
    """Single BGGD fit over every central-difference gradient of the image.

    Falls back to the isotropic Gaussian when the gradients are degenerate.
    """
    config = config or EstimatorConfig.for_restoration()
    gx, gy = central_difference(image.data)
    x = np.stack([gx.ravel(), gy.ravel()], axis=1)
    try:
        return estimate(x, config)
    except DegenerateSamplesError:
        p, phi, rho, m = _fallback(x)
        logger.warning("Image gradients are degenerate; using isotropic Gaussian parameters")
        return BggdParams(p=p, phi=phi, rho=rho, m=m)
