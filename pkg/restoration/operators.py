"""
Discrete linear operators with periodic boundary conditions.

Forward-difference gradient D and its adjoint, central differences for the
estimation stage, Gaussian blur K through the 2D FFT, and the spectral solve of
the ADMM u-subproblem. Every operator is block circulant with circulant blocks,
so each one is diagonalised by the 2D DFT.
"""

import logging
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import fft

from core.errors import DomainError
from core.types import GradientField, Image

logger = logging.getLogger(__name__)


# Array kernels used directly by the solver loop
def forward_difference(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(D_h u)(i, j) = u(i, j+1) - u(i, j); (D_v u)(i, j) = u(i+1, j) - u(i, j)."""
    return np.roll(u, -1, axis=1) - u, np.roll(u, -1, axis=0) - u


def forward_difference_adjoint(tx: np.ndarray, ty: np.ndarray) -> np.ndarray:
    """D^T t, the exact adjoint of forward_difference."""
    return (np.roll(tx, 1, axis=1) - tx) + (np.roll(ty, 1, axis=0) - ty)


def central_difference(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    gx = 0.5 * (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1))
    gy = 0.5 * (np.roll(u, -1, axis=0) - np.roll(u, 1, axis=0))
    return gx, gy


def grad_forward(u: Image) -> GradientField:
    """Forward-difference gradient with periodic wrap."""
    gx, gy = forward_difference(u.data)
    return GradientField(gx=gx, gy=gy)


def grad_transpose(t: GradientField) -> Image:
    """Adjoint of grad_forward: <Du, t> = <u, D^T t>."""
    return Image(data=forward_difference_adjoint(t.gx, t.gy))


def grad_central(u: Image) -> GradientField:
    """Central differences with periodic wrap; used only to sample gradients."""
    gx, gy = central_difference(u.data)
    return GradientField(gx=gx, gy=gy)


class PsfSpec(BaseModel):
    """Truncated, renormalised Gaussian point spread function."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    band: int
    sigma: float
    kernel: np.ndarray

    @field_validator("kernel", mode="before")
    @classmethod
    def _check_kernel(cls, value):
        kernel = np.asarray(value, dtype=np.float64)
        if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
            raise DomainError(f"PSF kernel must be square, got shape {kernel.shape}")
        if np.any(kernel < 0):
            raise DomainError("PSF kernel weights must be non-negative")
        return kernel

    @model_validator(mode="after")
    def _check_normalisation(self):
        if self.kernel.shape[0] != self.band:
            raise DomainError(f"PSF kernel size {self.kernel.shape[0]} does not match band {self.band}")
        if abs(self.kernel.sum() - 1.0) > 1e-12:
            raise DomainError(f"PSF kernel must sum to 1, got {self.kernel.sum()}")
        return self


def make_psf(band: int, sigma: float) -> PsfSpec:
    """Gaussian kernel on the centred band x band stencil, normalised to sum 1.

    Raises:
        DomainError: If band is even or not positive, or sigma is not positive
    """
    if band < 1 or band % 2 == 0:
        raise DomainError(f"PSF band must be a positive odd integer, got {band}")
    if not sigma > 0:
        raise DomainError(f"PSF sigma must be positive, got {sigma}")
    half = band // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    rr, cc = np.meshgrid(offsets, offsets, indexing="ij")
    kernel = np.exp(-(rr**2 + cc**2) / (2.0 * sigma**2))
    kernel /= kernel.sum()
    return PsfSpec(band=band, sigma=sigma, kernel=kernel)


def _operator_symbol(stencil: np.ndarray, center: Tuple[int, int], shape: Tuple[int, int]) -> np.ndarray:
    """Eigenvalues of the circulant operator applying `stencil` around `center`."""
    rows = (np.arange(stencil.shape[0]) - center[0]) % shape[0]
    cols = (np.arange(stencil.shape[1]) - center[1]) % shape[1]
    column = np.zeros(shape)
    # stencils wider than the image fold onto the torus
    np.add.at(column, (rows[:, None], cols[None, :]), stencil)
    return fft.fft2(column)


class SpectralCache:
    """DFT eigenvalues of D_h, D_v and K for one image shape.

    Building the cache is the only non-pure step; afterwards every method is a
    read-only function of the cached grids and may be called concurrently.
    """

    def __init__(self, shape: Tuple[int, int], psf: PsfSpec, workers: int = 1):
        """Initialize the cache.

        Args:
            shape: Image shape (height, width)
            psf: Blur kernel defining K
            workers: Threads handed to scipy.fft
        """
        self.shape = tuple(int(s) for s in shape)
        self.psf = psf
        self.workers = workers
        # stencils act as correlation: (D_h u)(i,j) = u(i,j+1) - u(i,j)
        self.dh = np.conj(_operator_symbol(np.array([[-1.0, 1.0]]), (0, 0), self.shape))
        self.dv = np.conj(_operator_symbol(np.array([[-1.0], [1.0]]), (0, 0), self.shape))
        half = psf.band // 2
        self.k = _operator_symbol(psf.kernel, (half, half), self.shape)
        self.dtd = np.abs(self.dh) ** 2 + np.abs(self.dv) ** 2
        self.ktk = np.abs(self.k) ** 2
        logger.debug(f"Built spectral cache for shape {self.shape}, psf band={psf.band} sigma={psf.sigma}")

    def check_shape(self, shape: Tuple[int, int]) -> None:
        if tuple(shape) != self.shape:
            raise DomainError(f"Image shape {tuple(shape)} does not match spectral cache shape {self.shape}")

    def blur(self, u: np.ndarray) -> np.ndarray:
        self.check_shape(u.shape)
        return fft.ifft2(self.k * fft.fft2(u, workers=self.workers), workers=self.workers).real

    def blur_transpose(self, u: np.ndarray) -> np.ndarray:
        self.check_shape(u.shape)
        return fft.ifft2(np.conj(self.k) * fft.fft2(u, workers=self.workers), workers=self.workers).real

    def system_symbol(self, ratio: float) -> np.ndarray:
        """Fourier symbol of D^T D + ratio * K^T K."""
        return self.dtd + ratio * self.ktk

    def solve(self, rhs: np.ndarray, ratio: float) -> np.ndarray:
        """Solve (D^T D + ratio K^T K) u = rhs by spectral division."""
        self.check_shape(rhs.shape)
        spectrum = fft.fft2(rhs, workers=self.workers) / self.system_symbol(ratio)
        return fft.ifft2(spectrum, workers=self.workers).real


def blur_apply(u: Image, psf: PsfSpec, cache: SpectralCache) -> Image:
    """K u by circular convolution through the FFT.

    Raises:
        DomainError: If u's shape differs from the cache's
    """
    if cache.psf is not psf and not np.array_equal(cache.psf.kernel, psf.kernel):
        raise DomainError("Spectral cache was built for a different PSF")
    return Image(data=cache.blur(u.data))


def blur_transpose(u: Image, psf: PsfSpec, cache: SpectralCache) -> Image:
    """K^T u; identical to blur_apply for the symmetric Gaussian kernels."""
    if cache.psf is not psf and not np.array_equal(cache.psf.kernel, psf.kernel):
        raise DomainError("Spectral cache was built for a different PSF")
    return Image(data=cache.blur_transpose(u.data))


def system_symbol_min(cache: SpectralCache, ratio: float) -> float:
    """Smallest eigenvalue of D^T D + ratio K^T K.

    Strictly positive iff null(D) and null(K) intersect only in zero; for a
    normalised kernel the zero frequency contributes ratio * 1.
    """
    return float(np.min(cache.system_symbol(ratio).real))


def u_solve(
    rhs_t: GradientField,
    rhs_r: Image,
    g: Image,
    beta_r: float,
    beta_t: float,
    cache: SpectralCache,
) -> Image:
    """Solve the ADMM u-subproblem.

    (D^T D + (beta_r/beta_t) K^T K) u = D^T rhs_t + (beta_r/beta_t) K^T (rhs_r + g)

    Args:
        rhs_t: t - rho_t / beta_t
        rhs_r: r - rho_r / beta_r
        g: Observed image
        beta_r: Penalty of the r = Ku - g constraint
        beta_t: Penalty of the t = Du constraint
        cache: Spectral cache built for g's shape

    Returns:
        The unique solution u
    """
    if not (beta_r > 0 and beta_t > 0):
        raise DomainError(f"Penalty parameters must be positive, got beta_r={beta_r}, beta_t={beta_t}")
    ratio = beta_r / beta_t
    rhs = forward_difference_adjoint(rhs_t.gx, rhs_t.gy) + ratio * cache.blur_transpose(rhs_r.data + g.data)
    return Image(data=cache.solve(rhs, ratio))
