import json
import logging

from commands.degrade import resolve_sigma
from commands.estimate_maps import warm_start
from config.run_config import RunConfig
from core.base_command import BaseCommand, CommandResponse
from core.errors import DomainError
from core.image_io import load_maps, read_image, save_maps, write_image, write_table
from metrics.metrics import isnr, psnr, ssim
from restoration.models import build_model_maps
from restoration.operators import SpectralCache
from restoration.solver import restore

logger = logging.getLogger(__name__)


class RestoreCommand(BaseCommand):
    """Full restoration pipeline: warm-up, maps, ADMM, metrics"""

    def __init__(self):
        super().__init__(name="restore", role="Restores a degraded image with the selected regulariser")

    def execute(self, request: RunConfig) -> CommandResponse:
        request.require("input")
        g, depth = read_image(request.input)
        request.out_dir.mkdir(parents=True, exist_ok=True)
        sigma = resolve_sigma(request, request.input)
        if sigma is None:
            raise DomainError("restore needs --sigma or a metadata sidecar next to the input")
        psf = request.psf()
        cache = SpectralCache(g.shape, psf, workers=request.workers)
        cfg = request.solver_config()

        if request.maps is not None:
            maps = load_maps(request.maps)
            logger.info(f"Loaded parameter maps from {request.maps}")
        else:
            source = warm_start(request, g)
            maps = build_model_maps(
                request.model, source, request.half_width, request.estimator_config(), request.workers
            )
            for path in save_maps(maps, request.out_dir, prefix="maps_").values():
                self.record_output(path)

        result = restore(g, psf, sigma, maps, cfg, cache)
        output = request.output or request.out_dir / f"restored{request.input.suffix or '.pgm'}"
        self.record_output(write_image(result.u, output, bit_depth=depth))
        self.record_output(write_table(result.trace, request.out_dir / "trace.csv"))

        report = {
            "model": request.model.value if request.maps is None else "maps",
            "iterations": result.iterations,
            "converged": result.converged,
            "mu": result.mu,
            "delta": result.delta,
            "data_fit": float(result.trace["data_fit"].iloc[-1]) if len(result.trace) else None,
        }
        if request.clean is not None:
            clean, _ = read_image(request.clean)
            report.update(
                isnr=isnr(g, clean, result.u),
                ssim=ssim(clean, result.u),
                psnr=psnr(clean, result.u),
            )
            logger.info(f"ISNR={report['isnr']:.3f} dB, SSIM={report['ssim']:.4f}")
        report_path = request.out_dir / "report.json"
        report_path.write_text(json.dumps(report, indent=2))
        self.record_output(report_path)
        return CommandResponse(
            success=True,
            message=f"Restored image written to {output}",
            data={"report": report, "outputs": self.get_status()["outputs"]},
        )
