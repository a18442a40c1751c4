"""
Regulariser variants expressed as parameter maps for the one ADMM solver.
"""

import logging
from enum import Enum
from typing import Optional

from core.types import Image, ParamMaps
from estimation.bggd import EstimatorConfig, estimate_global, estimate_maps

logger = logging.getLogger(__name__)


class RegularizerModel(str, Enum):
    """Available models, from plain TV to the full directional space-variant one."""

    TV = "tv"
    TVP = "tvp"
    TVSV = "tvsv"
    DTV = "dtv"


def build_model_maps(
    model: RegularizerModel,
    image: Image,
    half_width: Optional[int] = None,
    config: Optional[EstimatorConfig] = None,
    workers: Optional[int] = None,
) -> ParamMaps:
    """Parameter maps realising `model` for an image.

    tv uses p = 1 and Lambda = I everywhere. tvp fits one BGGD to all gradients
    and keeps only its exponent. tvsv keeps the per-pixel exponents
    but forces rho to 0, so Lambda = I everywhere. dtv keeps every estimated
    parameter. The scale map m is carried along for reporting only; the
    solver reads p and Lambda.

    Args:
        model: Regulariser to build
        image: Image the statistics are estimated from, typically the warm-up
        half_width: Neighborhood radius for per-pixel estimation
        config: Estimator configuration
        workers: Worker processes for per-pixel estimation

    Returns:
        ParamMaps of the image's shape
    """
    model = RegularizerModel(model)
    if model is RegularizerModel.TV:
        return ParamMaps.uniform(image.shape, p=1.0)
    if model is RegularizerModel.TVP:
        params = estimate_global(image, config)
        logger.info(f"Global exponent for tvp: p={params.p:.4f}")
        return ParamMaps.uniform(image.shape, p=params.p, m=params.m)
    maps = estimate_maps(image, half_width, config, workers)
    if model is RegularizerModel.TVSV:
        return maps.isotropic()
    return maps

