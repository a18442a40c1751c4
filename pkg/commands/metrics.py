import json
import logging

from config.run_config import RunConfig
from core.base_command import BaseCommand, CommandResponse
from core.image_io import read_image
from metrics.metrics import bsnr, isnr, psnr, ssim
from restoration.operators import SpectralCache

logger = logging.getLogger(__name__)


class MetricsCommand(BaseCommand):
    """Quality of an image against a clean reference"""

    def __init__(self):
        super().__init__(name="metrics", role="Reports SSIM and PSNR, plus BSNR and ISNR given the degraded image")

    def execute(self, request: RunConfig) -> CommandResponse:
        request.require("input", "clean")
        image, _ = read_image(request.input)
        clean, _ = read_image(request.clean)
        report = {"ssim": ssim(clean, image), "psnr": psnr(clean, image)}
        if request.degraded is not None:
            g, _ = read_image(request.degraded)
            cache = SpectralCache(clean.shape, request.psf(), workers=request.workers)
            report["bsnr"] = bsnr(clean, cache, g)
            report["isnr"] = isnr(g, clean, image)
        for name, value in report.items():
            logger.info(f"{name}: {value:.4f}")
        if request.output is not None:
            request.output.parent.mkdir(parents=True, exist_ok=True)
            request.output.write_text(json.dumps(report, indent=2))
            self.record_output(request.output)
        return CommandResponse(success=True, message="Metrics computed", data=report)
