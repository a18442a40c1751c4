"""
Restoration quality measures and estimator statistics.
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, model_validator
from skimage.metrics import structural_similarity

from core.errors import DomainError
from core.types import Image
from restoration.operators import SpectralCache

logger = logging.getLogger(__name__)


def _check_shapes(*images: Image) -> None:
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise DomainError(f"Images must share one shape, got {sorted(shapes)}")


def _ratio_db(numerator: float, denominator: float) -> float:
    if denominator == 0.0:
        return math.inf
    if numerator == 0.0:
        return -math.inf
    return 10.0 * math.log10(numerator / denominator)


def bsnr(u_clean: Image, cache: SpectralCache, u_corrupt: Image) -> float:
    """Blurred signal-to-noise ratio 10 log10(||Ku - mean(Ku)||^2 / ||g - Ku||^2), in dB.

    Returns +inf when g equals Ku.
    """
    _check_shapes(u_clean, u_corrupt)
    blurred = cache.blur(u_clean.data)
    signal = float(np.sum((blurred - blurred.mean()) ** 2))
    noise = float(np.sum((u_corrupt.data - blurred) ** 2))
    return _ratio_db(signal, noise)


def noise_sigma_for_bsnr(u_clean: Image, cache: SpectralCache, target_db: float) -> float:
    """Noise std giving the target BSNR when ||b||^2 = n sigma^2."""
    blurred = cache.blur(u_clean.data)
    signal = float(np.sum((blurred - blurred.mean()) ** 2))
    if signal == 0.0:
        raise DomainError("BSNR is undefined for an image whose blur is constant")
    return math.sqrt(signal / (u_clean.size * 10.0 ** (target_db / 10.0)))


def isnr(g: Image, u_clean: Image, u_restored: Image) -> float:
    """Improved SNR 10 log10(||g - u||^2 / ||u* - u||^2), in dB; +inf if u* = u."""
    _check_shapes(g, u_clean, u_restored)
    before = float(np.sum((g.data - u_clean.data) ** 2))
    after = float(np.sum((u_restored.data - u_clean.data) ** 2))
    if before == after:
        return 0.0
    return _ratio_db(before, after)


def ssim(a: Image, b: Image) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, L=1."""
    _check_shapes(a, b)
    return float(
        structural_similarity(
            a.data,
            b.data,
            data_range=1.0,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
            K1=0.01,
            K2=0.03,
        )
    )


def psnr(u_clean: Image, u: Image) -> float:
    """10 log10(1 / MSE) on the [0, 1] intensity scale."""
    _check_shapes(u_clean, u)
    mse = float(np.mean((u.data - u_clean.data) ** 2))
    return _ratio_db(1.0, mse)


class EstimatorStats(BaseModel):
    """Accuracy of repeated estimates of one parameter."""

    rel_bias: float
    emp_variance: float
    rel_variance: float
    rel_rmse: float
    n_runs: int
    n_samples: Optional[int] = None

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.emp_variance < 0 or self.rel_variance < 0:
            raise DomainError("Variances must be non-negative")
        if self.n_runs < 2:
            raise DomainError(f"At least two runs are required, got {self.n_runs}")
        return self


def estimator_stats(estimates: Sequence[float], truth: float, n_samples: Optional[int] = None) -> EstimatorStats:
    """Relative bias, empirical variance and relative RMSE of repeated estimates.

    B = (mean - truth) / truth, V = sum (w_j - mean)^2 / (l - 1) and
    rel_rmse = sqrt(V + (B truth)^2) / |truth|, so both terms share units.

    Args:
        estimates: The l >= 2 estimates
        truth: True value, non-zero
        n_samples: Sample size behind each estimate, recorded as is

    Returns:
        EstimatorStats

    Raises:
        DomainError: If truth is zero or fewer than two estimates are given
    """
    values = np.asarray(estimates, dtype=np.float64)
    if truth == 0:
        raise DomainError("Relative statistics are undefined for a zero truth")
    if values.size < 2:
        raise DomainError(f"At least two estimates are required, got {values.size}")
    mean = float(values.mean())
    bias = (mean - truth) / truth
    variance = float(values.var(ddof=1))
    rmse = math.sqrt(variance + (bias * truth) ** 2) / abs(truth)
    return EstimatorStats(
        rel_bias=bias,
        emp_variance=variance,
        rel_variance=variance / truth**2,
        rel_rmse=rmse,
        n_runs=int(values.size),
        n_samples=n_samples,
    )


def align_angles(estimates: Sequence[float], truth: float, period: float = math.pi) -> np.ndarray:
    """Shift angles by multiples of period so they lie within period/2 of truth."""
    values = np.asarray(estimates, dtype=np.float64)
    offset = np.mod(values - truth + 0.5 * period, period) - 0.5 * period
    return truth + offset
