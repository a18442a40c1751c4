"""
Bivariate non-convex proximal map of f(t) = (t^T A t)^{p/2}.

The minimiser of F(t) = f(t) + beta/2 ||t - q||^2 is found by rotating into the
eigenbasis of A, folding q into the first quadrant, and restricting the search
to an arc of a rectangular hyperbola, which leaves a scalar problem on
[0, |q~_1|]. Everything is vectorised over a leading batch axis so the ADMM
t-update can hand over all pixels at once.
"""

import logging
import math
from typing import Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config.config import settings
from core.errors import DomainError

logger = logging.getLogger(__name__)

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_BISECTION_STEPS = 64
_POLISH_WIDTH = 1e-6


class ProxConfig(BaseModel):
    """Tunables of the proximal solver."""

    model_config = ConfigDict(frozen=True)

    kappa_iso_tol: float = Field(default_factory=lambda: settings.KAPPA_ISO_TOL)
    n_grid_1d: int = Field(default_factory=lambda: settings.N_GRID_1D)
    tol_1d: float = Field(default_factory=lambda: settings.TOL_1D)
    tie_break: Literal["smallest"] = "smallest"

    @field_validator("kappa_iso_tol")
    @classmethod
    def _check_kappa(cls, value: float) -> float:
        if not value > 1.0:
            raise DomainError(f"kappa_iso_tol must exceed 1, got {value}")
        return value

    @field_validator("n_grid_1d")
    @classmethod
    def _check_grid(cls, value: int) -> int:
        if value < 8:
            raise DomainError(f"n_grid_1d must be at least 8, got {value}")
        return value

    @field_validator("tol_1d")
    @classmethod
    def _check_tol(cls, value: float) -> float:
        if not value > 0:
            raise DomainError(f"tol_1d must be positive, got {value}")
        return value


class ProxProblem(BaseModel):
    """One instance argmin_t (t^T A t)^{p/2} + beta/2 ||t - q||^2."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    q: np.ndarray
    A: np.ndarray
    p: float
    beta: float

    @field_validator("q", mode="before")
    @classmethod
    def _check_q(cls, value):
        q = np.asarray(value, dtype=np.float64).reshape(-1)
        if q.shape != (2,) or not np.all(np.isfinite(q)):
            raise DomainError(f"q must be a finite 2-vector, got {value!r}")
        return q

    @field_validator("A", mode="before")
    @classmethod
    def _check_a(cls, value):
        a = np.asarray(value, dtype=np.float64)
        if a.shape != (2, 2) or not np.all(np.isfinite(a)):
            raise DomainError(f"A must be a finite 2x2 matrix, got shape {a.shape}")
        _check_spd(a[None])
        return a

    @field_validator("p", "beta")
    @classmethod
    def _check_positive(cls, value: float) -> float:
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(f"p and beta must be positive, got {value}")
        return value

    def objective(self, t) -> np.ndarray:
        return prox_objective(t, self.q, self.A, self.p, self.beta)


def prox_objective(t, q, A, p, beta) -> np.ndarray:
    """F(t) = (t^T A t)^{p/2} + beta/2 ||t - q||^2 over trailing 2-vectors of t."""
    t = np.asarray(t, dtype=np.float64)
    quad = np.einsum("...i,ij,...j->...", t, np.asarray(A, dtype=np.float64), t)
    diff = t - np.asarray(q, dtype=np.float64)
    return np.power(np.maximum(quad, 0.0), p / 2.0) + 0.5 * beta * np.sum(diff * diff, axis=-1)


def _check_spd(a: np.ndarray) -> None:
    scale = np.maximum(1.0, np.max(np.abs(a), axis=(-2, -1)))
    asym = np.max(np.abs(a - np.swapaxes(a, -1, -2)), axis=(-2, -1))
    if np.any(asym > 1e-12 * scale):
        raise DomainError("A must be symmetric")
    if np.any(np.linalg.eigvalsh(a)[..., 0] <= 0):
        raise DomainError("A must be positive definite")


def solve_1d(
    h: Callable[[np.ndarray], np.ndarray],
    lo,
    hi,
    cfg: Optional[ProxConfig] = None,
    dh: Optional[Callable[[np.ndarray], np.ndarray]] = None,
):
    """Global minimiser of a smooth, possibly non-convex scalar function.

    h is evaluated on n_grid_1d uniform nodes (endpoints included); the bracket
    around the best node is then refined by golden-section search, or by
    bisection on dh when a derivative is supplied and changes sign across the
    bracket. Otherwise the golden-section result is polished by the same
    bisection on a narrow window around it. A refined point replaces the best
    node only if it is strictly better, so ties resolve toward the smaller node.

    Args:
        h: Vectorised objective; called with an array of shape (batch, k)
        lo: Lower interval end(s), scalar or shape (batch,)
        hi: Upper interval end(s); hi < lo is treated as the empty interval
        cfg: Grid size and tolerance
        dh: Optional vectorised derivative of h

    Returns:
        Minimiser(s), a float for scalar input, else shape (batch,)
    """
    cfg = cfg or ProxConfig()
    scalar = np.ndim(lo) == 0 and np.ndim(hi) == 0
    lo, hi = np.broadcast_arrays(np.atleast_1d(np.asarray(lo, dtype=np.float64)),
                                 np.atleast_1d(np.asarray(hi, dtype=np.float64)))
    hi = np.maximum(hi, lo)
    width = hi - lo
    rows = np.arange(lo.size)

    def evaluate(x: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            values = h(x)
        return np.where(np.isfinite(values), values, np.inf)

    n = cfg.n_grid_1d
    nodes = lo[:, None] + width[:, None] * np.linspace(0.0, 1.0, n)[None, :]
    values = evaluate(nodes)
    best = np.argmin(values, axis=1)
    best_x = nodes[rows, best]
    best_v = values[rows, best]
    a = nodes[rows, np.maximum(best - 1, 0)]
    b = nodes[rows, np.minimum(best + 1, n - 1)]

    refined = _golden_section(evaluate, a.copy(), b.copy(), cfg.tol_1d * width)
    if dh is not None:
        with np.errstate(all="ignore"):
            da = dh(a[:, None])[:, 0]
            db = dh(b[:, None])[:, 0]
        sign_change = (da < 0) & (db > 0)
        if np.any(sign_change):
            refined = np.where(sign_change, _derivative_bisection(dh, a, b, sign_change), refined)
        # golden section stalls near sqrt(eps) on flat minima; bisect dh in a
        # narrow window around its result when that window brackets a root
        step = _POLISH_WIDTH * np.maximum(width, np.finfo(float).tiny)
        near_lo = np.maximum(a, refined - step)
        near_hi = np.minimum(b, refined + step)
        with np.errstate(all="ignore"):
            d_lo = dh(near_lo[:, None])[:, 0]
            d_hi = dh(near_hi[:, None])[:, 0]
        polish = ~sign_change & (d_lo < 0) & (d_hi > 0)
        if np.any(polish):
            refined = np.where(polish, _derivative_bisection(dh, near_lo, near_hi, polish), refined)
    refined_v = evaluate(refined[:, None])[:, 0]
    result = np.where(refined_v < best_v, refined, best_x)
    if scalar:
        return float(result[0])
    return result


def _golden_section(evaluate, a: np.ndarray, b: np.ndarray, tol: np.ndarray) -> np.ndarray:
    # the grid bracket spans two cells; shrink until below tol
    ratio = max(np.min(tol / np.maximum(b - a, np.finfo(float).tiny)), np.finfo(float).eps)
    steps = int(math.ceil(math.log(min(ratio, 1.0)) / math.log(_INV_GOLDEN))) if ratio < 1.0 else 0
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc = evaluate(c[:, None])[:, 0]
    fd = evaluate(d[:, None])[:, 0]
    for _ in range(steps):
        left = fc <= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_next = np.where(left, b - _INV_GOLDEN * (b - a), d)
        d_next = np.where(left, c, a + _INV_GOLDEN * (b - a))
        trial = np.where(left, c_next, d_next)
        f_trial = evaluate(trial[:, None])[:, 0]
        fc, fd = np.where(left, f_trial, fd), np.where(left, fc, f_trial)
        c, d = c_next, d_next
    return 0.5 * (a + b)


def _derivative_bisection(dh, a: np.ndarray, b: np.ndarray, active: np.ndarray) -> np.ndarray:
    a = a.copy()
    b = b.copy()
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (a + b)
        with np.errstate(all="ignore"):
            slope = dh(mid[:, None])[:, 0]
        slope = np.where(np.isnan(slope), np.inf, slope)
        rising = slope > 0
        b = np.where(active & rising, mid, b)
        a = np.where(active & ~rising, mid, a)
    return 0.5 * (a + b)


def _radial_solve(weight, beta, target, p, cfg: ProxConfig) -> np.ndarray:
    """argmin over [0, target] of weight*r^p + beta/2 (r - target)^2, batched."""
    w = weight[:, None]
    bt = beta[:, None]
    tg = target[:, None]
    pp = p[:, None]

    def h(r):
        return w * np.power(r, pp) + 0.5 * bt * (r - tg) ** 2

    def dh(r):
        return w * pp * np.power(r, pp - 1.0) + bt * (r - tg)

    return solve_1d(h, np.zeros_like(target), target, cfg, dh=dh)


def hyperbola_arc_solution(q_bar, kappa, beta_bar, p, cfg: Optional[ProxConfig] = None) -> np.ndarray:
    """Minimise H(z) = (kappa z1^2 + z2^2)^{p/2} + beta_bar/2 ||z - q_bar||^2 on the arc.

    The arc is the part of the hyperbola (z1 - c1)(z2 - c2) = c1 c2 with
    c1 = -q1/(kappa-1), c2 = kappa q2/(kappa-1) inside the box [0, q1] x [0, q2].
    When a component of q_bar is zero the arc degenerates to the opposite axis
    and the matching scalar problem is solved instead.

    Args:
        q_bar: (batch, 2) non-negative folded centres, not both zero
        kappa: (batch,) condition numbers, > 1
        beta_bar: (batch,) rescaled penalties
        p: (batch,) exponents

    Returns:
        (batch, 2) minimisers z*
    """
    cfg = cfg or ProxConfig()
    q_bar = np.atleast_2d(np.asarray(q_bar, dtype=np.float64))
    size = q_bar.shape[0]
    kappa = np.broadcast_to(np.asarray(kappa, dtype=np.float64), (size,))
    beta_bar = np.broadcast_to(np.asarray(beta_bar, dtype=np.float64), (size,))
    p = np.broadcast_to(np.asarray(p, dtype=np.float64), (size,))
    z = np.zeros_like(q_bar)

    on_vertical = q_bar[:, 0] == 0.0
    on_horizontal = (q_bar[:, 1] == 0.0) & ~on_vertical
    general = ~(on_vertical | on_horizontal)

    if np.any(on_vertical):
        idx = on_vertical
        z[idx, 1] = _radial_solve(np.ones(idx.sum()), beta_bar[idx], q_bar[idx, 1], p[idx], cfg)
    if np.any(on_horizontal):
        idx = on_horizontal
        z[idx, 0] = _radial_solve(kappa[idx] ** (p[idx] / 2.0), beta_bar[idx], q_bar[idx, 0], p[idx], cfg)
    if np.any(general):
        idx = general
        q1 = q_bar[idx, 0]
        q2 = q_bar[idx, 1]
        k = kappa[idx]
        c1 = -q1 / (k - 1.0)
        c2 = k * q2 / (k - 1.0)
        z1 = _arc_solve(q1, q2, k, c1, c2, beta_bar[idx], p[idx], cfg)
        z[idx, 0] = z1
        z[idx, 1] = c2 * z1 / (z1 - c1)
    return z


def _arc_solve(q1, q2, kappa, c1, c2, beta_bar, p, cfg: ProxConfig) -> np.ndarray:
    k = kappa[:, None]
    a1 = c1[:, None]
    a2 = c2[:, None]
    bb = beta_bar[:, None]
    pp = p[:, None]
    t1 = q1[:, None]
    t2 = q2[:, None]

    def h(xi):
        h1 = xi**2 * (k + a2**2 / (xi - a1) ** 2)
        h2 = xi * (k - 1.0) * (xi - 2.0 * a1 + 2.0 * a2**2 / (k * (xi - a1)))
        return np.power(h1, pp / 2.0) + 0.5 * bb * h1 - 0.5 * bb * h2

    def dh(xi):
        shift = xi - a1
        z2 = a2 * xi / shift
        dz2 = -a1 * a2 / shift**2
        w = k + a2**2 / shift**2
        u = k - a1 * a2**2 / shift**3
        power = pp * np.power(xi, pp - 1.0) * np.power(w, pp / 2.0 - 1.0) * u
        return power + bb * ((xi - t1) + (z2 - t2) * dz2)

    return solve_1d(h, np.zeros_like(q1), q1, cfg, dh=dh)


def prox_dtv_batch(q, A, p, beta, cfg: Optional[ProxConfig] = None) -> np.ndarray:
    """Vectorised prox over a batch of problems.

    Args:
        q: (batch, 2) prox centres
        A: (batch, 2, 2) symmetric positive definite matrices
        p: exponents, scalar or (batch,)
        beta: penalties, scalar or (batch,)
        cfg: Solver configuration

    Returns:
        (batch, 2) global minimisers t*

    Raises:
        DomainError: If some A is not symmetric positive definite
    """
    cfg = cfg or ProxConfig()
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    size = q.shape[0]
    A = np.asarray(A, dtype=np.float64).reshape(size, 2, 2)
    p = np.broadcast_to(np.asarray(p, dtype=np.float64), (size,)).copy()
    beta = np.broadcast_to(np.asarray(beta, dtype=np.float64), (size,)).copy()
    if np.any(p <= 0) or np.any(beta <= 0):
        raise DomainError("p and beta must be positive")
    _check_spd(A)

    evals, evecs = np.linalg.eigh(A)
    lam_max = evals[:, 1]
    lam_min = evals[:, 0]
    # rows of V are eigenvectors, largest eigenvalue first: A = V^T diag V
    V = np.stack([evecs[:, :, 1], evecs[:, :, 0]], axis=1)
    kappa = lam_max / lam_min

    t = np.zeros_like(q)
    q_norm = np.linalg.norm(q, axis=1)
    nonzero = q_norm > 0
    iso = nonzero & (kappa <= cfg.kappa_iso_tol)
    aniso = nonzero & ~iso

    if np.any(iso):
        weight = lam_min[iso] ** (p[iso] / 2.0)
        radius = _radial_solve(weight, beta[iso], q_norm[iso], p[iso], cfg)
        t[iso] = (radius / q_norm[iso])[:, None] * q[iso]

    if np.any(aniso):
        v = V[aniso]
        q_rot = np.einsum("bij,bj->bi", v, q[aniso])
        signs = np.where(q_rot >= 0, 1.0, -1.0)
        beta_bar = beta[aniso] / lam_min[aniso] ** (p[aniso] / 2.0)
        z = hyperbola_arc_solution(np.abs(q_rot), kappa[aniso], beta_bar, p[aniso], cfg)
        t[aniso] = np.einsum("bji,bj->bi", v, signs * z)
    return t


def prox_dtv(prob: ProxProblem, cfg: Optional[ProxConfig] = None) -> np.ndarray:
    """Global minimiser of (t^T A t)^{p/2} + beta/2 ||t - q||^2 for one problem."""
    return prox_dtv_batch(prob.q[None], prob.A[None], prob.p, prob.beta, cfg)[0]


def prox_oracle(prob: ProxProblem, grid_extent: Optional[float] = None, grid_n: int = 2001) -> np.ndarray:
    """Brute-force argmin of F over a uniform grid_n x grid_n grid.

    Every minimiser satisfies ||t* - q|| <= ||q|| because F(t*) <= F(0), so by
    default the grid covers the box of half-width ||q|| centred at q. An explicit
    grid_extent gives the box [-extent, extent]^2 instead.
    """
    q_norm = float(np.linalg.norm(prob.q))
    if grid_extent is None:
        if q_norm == 0.0:
            return np.zeros(2)
        xs = np.linspace(prob.q[0] - q_norm, prob.q[0] + q_norm, grid_n)
        ys = np.linspace(prob.q[1] - q_norm, prob.q[1] + q_norm, grid_n)
    else:
        xs = ys = np.linspace(-grid_extent, grid_extent, grid_n)
    (a11, a12), (_, a22) = prob.A
    half_p = prob.p / 2.0
    best_value = np.inf
    best_point = np.zeros(2)
    chunk = max(1, 2**20 // grid_n)
    for start in range(0, grid_n, chunk):
        y = ys[start : start + chunk, None]
        x = xs[None, :]
        quad = np.maximum(a11 * x * x + 2.0 * a12 * x * y + a22 * y * y, 0.0)
        values = np.power(quad, half_p) + 0.5 * prob.beta * ((x - prob.q[0]) ** 2 + (y - prob.q[1]) ** 2)
        row, col = np.unravel_index(int(np.argmin(values)), values.shape)
        if values[row, col] < best_value:
            best_value = float(values[row, col])
            best_point = np.array([xs[col], ys[start + row]])
    return best_point
