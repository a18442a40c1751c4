import logging

import numpy as np

from commands.degrade import resolve_sigma
from config.run_config import RunConfig
from core.base_command import BaseCommand, CommandResponse
from core.image_io import ellipse_table, read_image, save_maps, write_table
from core.types import Image
from estimation.bggd import estimate_maps
from restoration.operators import SpectralCache
from restoration.solver import restore_tv_warmup

logger = logging.getLogger(__name__)


def warm_start(request: RunConfig, g: Image) -> Image:
    """TV-L2 warm-up of g, skipped when no noise level is known."""
    sigma = resolve_sigma(request, request.input)
    if request.warmup_iters == 0:
        return g
    if sigma is None:
        logger.warning("No --sigma and no metadata sidecar; estimating maps on the raw image")
        return g
    psf = request.psf()
    cache = SpectralCache(g.shape, psf, workers=request.workers)
    return restore_tv_warmup(g, psf, sigma, request.solver_config(), cache)


class EstimateMapsCommand(BaseCommand):
    """Estimate per-pixel BGGD parameter maps of an image"""

    def __init__(self):
        super().__init__(name="estimate-maps", role="Writes p, e1, theta, m grids and the ellipse table")

    def execute(self, request: RunConfig) -> CommandResponse:
        request.require("input")
        g, _ = read_image(request.input)
        source = warm_start(request, g)
        maps = estimate_maps(source, request.half_width, request.estimator_config(), request.workers)

        for path in save_maps(maps, request.out_dir).values():
            self.record_output(path)
        table = ellipse_table(maps, request.ellipse_stride)
        self.record_output(write_table(table, request.out_dir / "ellipses.csv"))
        return CommandResponse(
            success=True,
            message=f"Parameter maps written to {request.out_dir}",
            data={
                "median_p": float(np.median(maps.p)),
                "median_e1": float(np.median(maps.e1)),
                "outputs": self.get_status()["outputs"],
            },
        )
