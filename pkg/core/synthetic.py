"""
Synthetic test images and the blur-plus-noise degradation g = Ku + b.
"""

import logging
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from core.errors import DomainError
from core.types import Image

logger = logging.getLogger(__name__)

Shape = Tuple[int, int]


def stripes(shape: Shape = (64, 64), period: int = 8, low: float = 0.2, high: float = 0.8) -> Image:
    """Vertical stripes of width period/2 alternating between low and high."""
    if period < 2:
        raise DomainError(f"Stripe period must be at least 2, got {period}")
    cols = np.arange(shape[1])
    row = np.where((cols // (period // 2)) % 2 == 0, low, high)
    return Image(data=np.tile(row, (shape[0], 1)))


def edge(shape: Shape = (64, 64), low: float = 0.2, high: float = 0.8) -> Image:
    """Single vertical step edge at the middle column."""
    data = np.full(shape, low)
    data[:, shape[1] // 2 :] = high
    return Image(data=data)


def geometric(shape: Shape = (64, 64)) -> Image:
    """Flat background with a vertical edge, a square (corners) and a disk."""
    height, width = shape
    data = np.full(shape, 0.2)
    data[:, width // 2 :] = 0.45
    data[height // 8 : 3 * height // 8, width // 8 : 3 * width // 8] = 0.8
    rows, cols = np.mgrid[0:height, 0:width]
    radius = min(height, width) / 6.0
    disk = (rows - 0.7 * height) ** 2 + (cols - 0.7 * width) ** 2 <= radius**2
    data[disk] = 0.9
    return Image(data=data)


def checkerboard(shape: Shape = (64, 64), block: int = 8, low: float = 0.2, high: float = 0.8) -> Image:
    if block < 1:
        raise DomainError(f"Block size must be positive, got {block}")
    rows, cols = np.mgrid[0 : shape[0], 0 : shape[1]]
    return Image(data=np.where(((rows // block) + (cols // block)) % 2 == 0, low, high))


def constant(shape: Shape = (64, 64), value: float = 0.5) -> Image:
    return Image(data=np.full(shape, value))


FIXTURES: Dict[str, Callable[..., Image]] = {
    "stripes": stripes,
    "edge": edge,
    "geometric": geometric,
    "checkerboard": checkerboard,
    "constant": constant,
}


def make_fixture(name: str, shape: Shape = (64, 64)) -> Image:
    """Build a named synthetic image."""
    try:
        factory = FIXTURES[name]
    except KeyError:
        raise DomainError(f"Unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    return factory(shape)


def awgn(shape: Shape, sigma: float, seed: int, calibrate: bool = True) -> np.ndarray:
    """Zero-mean Gaussian noise; calibrated noise is rescaled so ||b||^2 = n sigma^2."""
    if sigma < 0:
        raise DomainError(f"Noise standard deviation must be non-negative, got {sigma}")
    noise = np.random.default_rng(seed).standard_normal(shape)
    if calibrate:
        norm = np.linalg.norm(noise)
        if norm > 0:
            noise *= np.sqrt(noise.size) / norm
    return sigma * noise


def add_noise(image: Image, sigma: float, seed: int, calibrate: bool = False) -> Image:
    return Image(data=image.data + awgn(image.shape, sigma, seed, calibrate))


def degrade(u: Image, blur: Callable[[np.ndarray], np.ndarray], sigma: float, seed: int) -> Image:
    """g = Ku + b with calibrated AWGN b of standard deviation sigma.

    Args:
        u: Clean image
        blur: Function applying K to a grid, e.g. SpectralCache.blur
        sigma: Noise standard deviation
        seed: Noise seed

    Returns:
        The corrupted image g
    """
    g = blur(u.data) + awgn(u.shape, sigma, seed)
    logger.info(f"Degraded {u.width}x{u.height} image with sigma={sigma:.4e}, seed={seed}")
    return Image(data=g)
