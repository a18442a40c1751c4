"""
ADMM for the space-variant directional TV-L2 model with the discrepancy principle.

The constrained form introduces r = Ku - g and t = Du. Each iteration solves
the u-subproblem spectrally, projects onto the discrepancy ball (which fixes
the regularisation parameter mu as a by-product), applies the per-pixel
non-convex prox to t, and updates the multipliers.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.config import settings
from core.errors import DomainError, NumericalError
from core.types import GradientField, Image, ParamMaps
from restoration.operators import (
    PsfSpec,
    SpectralCache,
    forward_difference,
    u_solve,
)
from restoration.prox import ProxConfig, prox_dtv_batch

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["iter", "rel_change", "data_fit", "mu", "res_t", "res_r"]
DISCREPANCY_SLACK = 1.05
RESIDUAL_FACTOR = 10.0


class SolverConfig(BaseModel):
    """Penalties, stopping rule and discrepancy parameter of the ADMM loop."""

    model_config = ConfigDict(frozen=True)

    tau: float = Field(default_factory=lambda: settings.TAU)
    beta_r: float = Field(default_factory=lambda: settings.BETA_R)
    beta_t: float = Field(default_factory=lambda: settings.BETA_T)
    max_iters: int = Field(default_factory=lambda: settings.MAX_ITERS)
    stop_tol: float = Field(default_factory=lambda: settings.STOP_TOL)
    warmup_iters: int = Field(default_factory=lambda: settings.WARMUP_ITERS)
    prox: ProxConfig = Field(default_factory=ProxConfig)

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.tau < 1.0:
            raise DomainError(f"tau must be at least 1, got {self.tau}")
        if self.beta_r <= 0 or self.beta_t <= 0:
            raise DomainError(f"Penalties must be positive, got beta_r={self.beta_r}, beta_t={self.beta_t}")
        if self.stop_tol <= 0:
            raise DomainError(f"stop_tol must be positive, got {self.stop_tol}")
        if self.max_iters < 0 or self.warmup_iters < 0:
            raise DomainError("Iteration counts must be non-negative")
        return self


class AdmmState(BaseModel):
    """Primal, auxiliary and multiplier variables at iteration k."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    u: Image
    r: Image
    t: GradientField
    rho_r: Image
    rho_t: GradientField
    mu: float = 0.0
    k: int = 0

    @model_validator(mode="after")
    def _check_invariants(self):
        shape = self.u.shape
        if any(item.shape != shape for item in (self.r, self.t, self.rho_r, self.rho_t)):
            raise DomainError("ADMM state variables must share one shape")
        if self.mu < 0:
            raise DomainError(f"mu must be non-negative, got {self.mu}")
        return self


class RestoreResult(BaseModel):
    """Outcome of restore: final iterate, per-iteration trace and status."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    u: Image
    trace: pd.DataFrame
    converged: bool
    iterations: int
    mu: float
    delta: float


def discrepancy_radius(tau: float, sigma_noise: float, n: int) -> float:
    """delta = tau * sigma * sqrt(n)."""
    return tau * sigma_noise * math.sqrt(n)


def r_update(w: np.ndarray, delta: float, beta_r: float) -> Tuple[np.ndarray, float]:
    """Joint (r, mu) update: projection of w onto the delta-ball.

    Args:
        w: Ku - g + rho_r / beta_r
        delta: Discrepancy radius, >= 0
        beta_r: Penalty of the r constraint

    Returns:
        (r, mu) with mu = 0 inside the ball, beta_r (||w|| / delta - 1) outside
    """
    w = np.asarray(w, dtype=np.float64)
    norm = float(np.linalg.norm(w))
    if norm <= delta:
        return w.copy(), 0.0
    if delta == 0.0:
        return np.zeros_like(w), math.inf
    return (delta / norm) * w, beta_r * (norm / delta - 1.0)


def t_update(
    u_new: Image,
    rho_t: GradientField,
    beta_t: float,
    maps: ParamMaps,
    cfg: Optional[ProxConfig] = None,
    matrices: Optional[np.ndarray] = None,
) -> GradientField:
    """Per-pixel prox of the directional regulariser at q = Du + rho_t / beta_t.

    Args:
        u_new: Current primal iterate
        rho_t: Multiplier of the t = Du constraint
        beta_t: Penalty of the t constraint
        maps: Parameter maps giving p_i and A_i = R^T Lambda^2 R
        cfg: Prox configuration
        matrices: Precomputed maps.regularizer_matrices(), if available

    Returns:
        The new t as a GradientField
    """
    if maps.shape != u_new.shape:
        raise DomainError(f"Parameter maps shape {maps.shape} does not match image shape {u_new.shape}")
    dx, dy = forward_difference(u_new.data)
    qx = dx + rho_t.gx / beta_t
    qy = dy + rho_t.gy / beta_t
    if matrices is None:
        matrices = maps.regularizer_matrices()
    q = np.stack([qx.ravel(), qy.ravel()], axis=1)
    t = prox_dtv_batch(q, matrices, maps.p.ravel(), beta_t, cfg)
    return GradientField(gx=t[:, 0].reshape(u_new.shape), gy=t[:, 1].reshape(u_new.shape))


def dual_update(
    state: AdmmState,
    u_new: Image,
    r_new: Image,
    t_new: GradientField,
    cfg: SolverConfig,
    data_residual: np.ndarray,
) -> Tuple[Image, GradientField]:
    """rho_r <- rho_r - beta_r (r - (Ku - g)); rho_t <- rho_t - beta_t (t - Du)."""
    dx, dy = forward_difference(u_new.data)
    rho_r = state.rho_r.data - cfg.beta_r * (r_new.data - data_residual)
    rho_tx = state.rho_t.gx - cfg.beta_t * (t_new.gx - dx)
    rho_ty = state.rho_t.gy - cfg.beta_t * (t_new.gy - dy)
    return Image(data=rho_r), GradientField(gx=rho_tx, gy=rho_ty)


def meets_stopping_rule(
    rel_change: float,
    data_fit: float,
    res_r: float,
    res_t: float,
    delta: float,
    g_norm: float,
    du_norm: float,
    stop_tol: float,
) -> bool:
    """Convergence test: small relative change and a feasible iterate.

    Besides rel_change < stop_tol, the constraint residuals must satisfy
    res_r <= 10 stop_tol ||g|| and res_t <= 10 stop_tol ||Du||, and the data
    fit must lie within 1.05 delta.
    """
    if not rel_change < stop_tol:
        return False
    if res_r > RESIDUAL_FACTOR * stop_tol * g_norm:
        return False
    if res_t > RESIDUAL_FACTOR * stop_tol * du_norm:
        return False
    return data_fit <= DISCREPANCY_SLACK * delta


def _require_finite(iteration: int, **arrays: np.ndarray) -> None:
    for name, value in arrays.items():
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"Non-finite values in {name}", iteration=iteration)


def restore(
    g: Image,
    psf: PsfSpec,
    sigma_noise: float,
    maps: ParamMaps,
    cfg: Optional[SolverConfig] = None,
    cache: Optional[SpectralCache] = None,
) -> RestoreResult:
    """Restore g by ADMM with automatic mu from the discrepancy principle.

    Starts from u = g, r = Ku - g, t = Du and zero multipliers; iterates the
    u, r, t and multiplier updates in that order until meets_stopping_rule
    holds or max_iters is reached. A small relative change alone does not
    stop the loop while the constraints are still violated.

    Args:
        g: Observed (blurred, noisy) image
        psf: Blur kernel
        sigma_noise: Noise standard deviation, > 0
        maps: Regulariser parameter maps matching g's shape
        cfg: Solver configuration
        cache: Spectral cache for g's shape and psf, built when omitted

    Returns:
        RestoreResult with the final iterate and the trace DataFrame

    Raises:
        DomainError: On shape mismatches or non-positive sigma_noise
        NumericalError: If an iterate becomes non-finite
    """
    cfg = cfg or SolverConfig()
    if not sigma_noise > 0:
        raise DomainError(f"Noise standard deviation must be positive, got {sigma_noise}")
    if maps.shape != g.shape:
        raise DomainError(f"Parameter maps shape {maps.shape} does not match image shape {g.shape}")
    cache = cache or SpectralCache(g.shape, psf, workers=settings.WORKERS)
    cache.check_shape(g.shape)

    delta = discrepancy_radius(cfg.tau, sigma_noise, g.size)
    matrices = maps.regularizer_matrices()
    u = g.data.copy()
    dx, dy = forward_difference(u)
    state = AdmmState(
        u=g,
        r=Image(data=cache.blur(u) - g.data),
        t=GradientField(gx=dx, gy=dy),
        rho_r=Image(data=np.zeros(g.shape)),
        rho_t=GradientField(gx=np.zeros(g.shape), gy=np.zeros(g.shape)),
    )
    logger.info(f"ADMM start: {g.width}x{g.height}, delta={delta:.4e}, beta_r={cfg.beta_r}, beta_t={cfg.beta_t}")

    g_norm = float(np.linalg.norm(g.data))
    rows = []
    converged = False
    for k in range(1, cfg.max_iters + 1):
        try:
            rhs_t = GradientField(
                gx=state.t.gx - state.rho_t.gx / cfg.beta_t,
                gy=state.t.gy - state.rho_t.gy / cfg.beta_t,
            )
            rhs_r = Image(data=state.r.data - state.rho_r.data / cfg.beta_r)
            u_new = u_solve(rhs_t, rhs_r, g, cfg.beta_r, cfg.beta_t, cache)

            residual = cache.blur(u_new.data) - g.data
            r_data, mu = r_update(residual + state.rho_r.data / cfg.beta_r, delta, cfg.beta_r)
            _require_finite(k, r=r_data, mu=np.asarray(mu))
            r_new = Image(data=r_data)
            t_new = t_update(u_new, state.rho_t, cfg.beta_t, maps, cfg.prox, matrices)
            rho_r, rho_t = dual_update(state, u_new, r_new, t_new, cfg, residual)
        except NumericalError:
            raise
        except ValueError as exc:
            # shapes were checked up front, so validation failures here mean NaN or inf
            raise NumericalError(f"ADMM iterate became invalid: {exc}", iteration=k) from exc

        prev_norm = float(np.linalg.norm(state.u.data))
        change = float(np.linalg.norm(u_new.data - state.u.data))
        rel_change = change / prev_norm if prev_norm > 0 else change
        dx, dy = forward_difference(u_new.data)
        du_norm = float(np.sqrt(np.sum(dx * dx + dy * dy)))
        res_t = float(np.sqrt(np.sum((t_new.gx - dx) ** 2 + (t_new.gy - dy) ** 2)))
        res_r = float(np.linalg.norm(r_data - residual))
        data_fit = float(np.linalg.norm(residual))
        rows.append((k, rel_change, data_fit, mu, res_t, res_r))
        logger.debug(
            f"iter {k}: rel_change={rel_change:.3e} data_fit={data_fit:.4e} mu={mu:.4e} "
            f"res_t={res_t:.3e} res_r={res_r:.3e}"
        )

        state = AdmmState(u=u_new, r=r_new, t=t_new, rho_r=rho_r, rho_t=rho_t, mu=mu, k=k)
        # u(1) = u(0) under the consistent start, so the test begins at k = 2
        if k > 1 and meets_stopping_rule(rel_change, data_fit, res_r, res_t, delta, g_norm, du_norm, cfg.stop_tol):
            converged = True
            break

    trace = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    if converged:
        logger.info(f"ADMM converged after {state.k} iterations, mu={state.mu:.4e}")
    elif cfg.max_iters > 0:
        logger.warning(
            f"ADMM stopped at max_iters={cfg.max_iters} without meeting the stopping rule "
            f"(stop_tol={cfg.stop_tol}, data_fit/delta={rows[-1][2] / delta if delta > 0 else math.inf:.4f})"
        )
    return RestoreResult(
        u=state.u,
        trace=trace,
        converged=converged,
        iterations=state.k,
        mu=state.mu,
        delta=delta,
    )


def restore_tv_warmup(
    g: Image,
    psf: PsfSpec,
    sigma_noise: float,
    cfg: Optional[SolverConfig] = None,
    cache: Optional[SpectralCache] = None,
) -> Image:
    """A few TV-L2 iterations (p = 1, Lambda = I) used before map estimation."""
    cfg = cfg or SolverConfig()
    if cfg.warmup_iters == 0:
        return g
    warmup = cfg.model_copy(update={"max_iters": cfg.warmup_iters})
    logger.info(f"TV-L2 warm-up for {cfg.warmup_iters} iterations")
    return restore(g, psf, sigma_noise, ParamMaps.uniform(g.shape, p=1.0), warmup, cache).u


def dtv_value(u: Image, maps: ParamMaps) -> float:
    """Regulariser value sum_i ((Du)_i^T A_i (Du)_i)^{p_i/2}."""
    if maps.shape != u.shape:
        raise DomainError(f"Parameter maps shape {maps.shape} does not match image shape {u.shape}")
    dx, dy = forward_difference(u.data)
    v = np.stack([dx.ravel(), dy.ravel()], axis=1)
    quad = np.maximum(np.einsum("ni,nij,nj->n", v, maps.regularizer_matrices(), v), 0.0)
    return float(np.sum(np.power(quad, maps.p.ravel() / 2.0)))


def objective(u: Image, g: Image, maps: ParamMaps, mu: float, cache: SpectralCache) -> float:
    """DTV(u) + mu/2 ||Ku - g||^2."""
    residual = cache.blur(u.data) - g.data
    return dtv_value(u, maps) + 0.5 * mu * float(np.sum(residual * residual))
