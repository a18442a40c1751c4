import logging
from pathlib import Path
from typing import Optional

from pydantic import BaseModel

from config.run_config import RunConfig
from core.base_command import BaseCommand, CommandResponse
from core.errors import DomainError
from core.image_io import read_image, write_image
from core.synthetic import degrade
from metrics.metrics import bsnr, noise_sigma_for_bsnr
from restoration.operators import SpectralCache

logger = logging.getLogger(__name__)


class DegradationMetadata(BaseModel):
    """Sidecar written next to a degraded image."""
    sigma: float
    seed: int
    psf_band: int
    psf_sigma: float
    bsnr_target: Optional[float] = None
    bsnr_measured: float
    width: int
    height: int


def metadata_path(image_path: Path) -> Path:
    return Path(str(image_path) + ".json")


def load_metadata(image_path: Path) -> Optional[DegradationMetadata]:
    """Metadata of a degraded image, or None when no sidecar exists."""
    path = metadata_path(image_path)
    if not path.exists():
        return None
    return DegradationMetadata.model_validate_json(path.read_text())


def resolve_sigma(request: RunConfig, image_path: Path) -> Optional[float]:
    """Noise std from --sigma, else from the image's sidecar."""
    if request.sigma is not None:
        return request.sigma
    metadata = load_metadata(image_path)
    if metadata is not None:
        logger.info(f"Using sigma={metadata.sigma:.4e} from {metadata_path(image_path)}")
        return metadata.sigma
    return None


class DegradeCommand(BaseCommand):
    """Blur a clean image and add calibrated white Gaussian noise"""

    def __init__(self):
        super().__init__(name="degrade", role="Builds g = Ku + b at a target BSNR or noise level")

    def execute(self, request: RunConfig) -> CommandResponse:
        request.require("input")
        if request.sigma is None and request.bsnr is None:
            raise DomainError("degrade needs --sigma or --bsnr")
        clean, depth = read_image(request.input)
        psf = request.psf()
        cache = SpectralCache(clean.shape, psf, workers=request.workers)
        if request.bsnr is not None:
            sigma = noise_sigma_for_bsnr(clean, cache, request.bsnr)
        else:
            sigma = request.sigma
        g = degrade(clean, cache.blur, sigma, request.seed)

        output = request.output or request.out_dir / f"degraded{request.input.suffix or '.pgm'}"
        self.record_output(write_image(g, output, bit_depth=depth))
        metadata = DegradationMetadata(
            sigma=sigma,
            seed=request.seed,
            psf_band=psf.band,
            psf_sigma=psf.sigma,
            bsnr_target=request.bsnr,
            bsnr_measured=bsnr(clean, cache, g),
            width=clean.width,
            height=clean.height,
        )
        sidecar = metadata_path(output)
        sidecar.write_text(metadata.model_dump_json(indent=2))
        self.record_output(sidecar)
        logger.info(f"BSNR of degraded image: {metadata.bsnr_measured:.3f} dB")
        return CommandResponse(
            success=True,
            message=f"Degraded image written to {output}",
            data={"metadata": metadata.model_dump(), "outputs": self.get_status()["outputs"]},
        )
