"""
Grayscale image files and CSV grids.

Images are PGM (P2/P5) or PNG, 8 or 16 bit, held internally as float64 on the
[0, 1] scale. Parameter maps are stored as four CSV grids whose first line is
`width,height`.
"""

import logging
import math
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
import pandas as pd
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from core.errors import DomainError
from core.types import Image, ParamMaps, weights_from_polar, ellipse_geometry

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_SIXTEEN_BIT_MODES = {"I", "I;16", "I;16B", "I;16L"}
MAP_NAMES = ("p", "e1", "theta", "m")


def read_image(path: PathLike) -> Tuple[Image, int]:
    """Read a grayscale PGM or PNG file.

    Args:
        path: File to read

    Returns:
        (image scaled to [0, 1], bit depth 8 or 16)

    Raises:
        DomainError: If the file is missing, unreadable or not grayscale
    """
    path = Path(path)
    try:
        with PILImage.open(path) as pil:
            pil.load()
            mode = pil.mode
            if mode in _SIXTEEN_BIT_MODES:
                data = np.asarray(pil, dtype=np.float64) / 65535.0
                depth = 16
            elif mode in ("L", "1", "P"):
                data = np.asarray(pil.convert("L"), dtype=np.float64) / 255.0
                depth = 8
            else:
                raise DomainError(f"{path} is not a grayscale image (mode {mode})")
    except (OSError, UnidentifiedImageError) as exc:
        raise DomainError(f"Cannot read image {path}: {exc}") from exc
    logger.debug(f"Read {path} ({data.shape[1]}x{data.shape[0]}, {depth}-bit)")
    return Image(data=data), depth


def write_image(image: Image, path: PathLike, bit_depth: int = 8) -> Path:
    """Write an image as PGM (binary P5) or PNG, chosen by the file suffix.

    Intensities are clipped to [0, 1] and rounded to the target depth.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".pgm", ".png"):
        raise DomainError(f"Unsupported image format {suffix!r}; use .pgm or .png")
    clipped = np.clip(image.data, 0.0, 1.0)
    if bit_depth == 8:
        pil = PILImage.fromarray(np.round(clipped * 255.0).astype(np.uint8))
    elif bit_depth == 16:
        pil = PILImage.fromarray(np.round(clipped * 65535.0).astype(np.uint16))
    else:
        raise DomainError(f"Bit depth must be 8 or 16, got {bit_depth}")
    path.parent.mkdir(parents=True, exist_ok=True)
    pil.save(path, format="PPM" if suffix == ".pgm" else "PNG")
    logger.info(f"Wrote {path}")
    return path


def write_grid(values: np.ndarray, path: PathLike) -> Path:
    """Write a 2D grid as CSV preceded by a `width,height` line."""
    path = Path(path)
    values = np.asarray(values, dtype=np.float64)
    height, width = values.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, values, delimiter=",", fmt="%.17g", header=f"{width},{height}", comments="")
    return path


def read_grid(path: PathLike) -> np.ndarray:
    """Read a grid written by write_grid, checking it against its header."""
    path = Path(path)
    try:
        with open(path) as handle:
            width, height = (int(v) for v in handle.readline().strip().split(","))
        values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DomainError(f"Cannot read grid {path}: {exc}") from exc
    if values.shape != (height, width):
        raise DomainError(f"Grid {path} has shape {values.shape}, header says {(height, width)}")
    return values


def save_maps(maps: ParamMaps, out_dir: PathLike, prefix: str = "") -> Dict[str, Path]:
    """Write the p, e1, theta (radians) and m grids; returns name -> path."""
    out_dir = Path(out_dir)
    grids = {"p": maps.p, "e1": maps.e1, "theta": maps.theta, "m": maps.m}
    paths = {name: write_grid(grids[name], out_dir / f"{prefix}{name}.csv") for name in MAP_NAMES}
    logger.info(f"Wrote parameter maps to {out_dir}")
    return paths


def load_maps(source: PathLike, prefix: str = "") -> ParamMaps:
    """Load maps from a directory holding p.csv, e1.csv, theta.csv and m.csv."""
    source = Path(source)
    grids = {name: read_grid(source / f"{prefix}{name}.csv") for name in MAP_NAMES}
    return ParamMaps.from_geometry(grids["p"], grids["e1"], grids["theta"], grids["m"])


def ellipse_table(maps: ParamMaps, stride: int = 1) -> pd.DataFrame:
    """Anisotropy ellipses (x, y, a, b, eccentricity, theta in degrees) every `stride` pixels."""
    if stride < 1:
        raise DomainError(f"Stride must be positive, got {stride}")
    rows = []
    height, width = maps.shape
    for y in range(0, height, stride):
        for x in range(0, width, stride):
            weights = weights_from_polar(float(maps.rho[y, x]), float(maps.phi[y, x]))
            a, b, ecc = ellipse_geometry(weights)
            rows.append((x, y, a, b, ecc, math.degrees(weights.theta)))
    return pd.DataFrame(rows, columns=["x", "y", "a", "b", "eccentricity", "theta"])


def write_table(table: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    logger.info(f"Wrote {path}")
    return path
