from config.run_config import RunConfig
from core.base_command import BaseCommand, CommandResponse
from core.image_io import write_image
from core.synthetic import make_fixture


class FixtureCommand(BaseCommand):
    """Write a synthetic test image"""

    def __init__(self):
        super().__init__(name="fixture", role="Writes stripes, edge, geometric, checkerboard or constant images")

    def execute(self, request: RunConfig) -> CommandResponse:
        image = make_fixture(request.fixture, (request.height, request.width))
        output = request.output or request.out_dir / f"{request.fixture}.pgm"
        self.record_output(write_image(image, output, bit_depth=request.bit_depth))
        return CommandResponse(
            success=True,
            message=f"Fixture {request.fixture!r} written to {output}",
            data={"fixture": request.fixture, "path": str(output)},
        )
