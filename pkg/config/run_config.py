"""
Per-invocation configuration of the command-line front end.

Values resolve in the order Settings defaults < JSON config file < flags.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from config.config import settings
from core.errors import DomainError
from estimation.bggd import EstimatorConfig
from restoration.models import RegularizerModel
from restoration.operators import PsfSpec, make_psf
from restoration.prox import ProxConfig
from restoration.solver import SolverConfig

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    """Everything one command needs; parameters mirror the CLI flags."""

    command: str
    input: Optional[Path] = None
    output: Optional[Path] = None
    out_dir: Path = Path("out")
    clean: Optional[Path] = None
    degraded: Optional[Path] = None
    maps: Optional[Path] = None

    psf_band: int = Field(default_factory=lambda: settings.PSF_BAND)
    psf_sigma: float = Field(default_factory=lambda: settings.PSF_SIGMA)
    sigma: Optional[float] = None
    bsnr: Optional[float] = None
    seed: int = Field(default_factory=lambda: settings.SEED)

    tau: float = Field(default_factory=lambda: settings.TAU)
    beta_r: float = Field(default_factory=lambda: settings.BETA_R)
    beta_t: float = Field(default_factory=lambda: settings.BETA_T)
    max_iters: int = Field(default_factory=lambda: settings.MAX_ITERS)
    stop_tol: float = Field(default_factory=lambda: settings.STOP_TOL)
    warmup_iters: int = Field(default_factory=lambda: settings.WARMUP_ITERS)

    half_width: int = Field(default_factory=lambda: settings.HALF_WIDTH)
    p_min: float = Field(default_factory=lambda: settings.P_MIN)
    p_max: Optional[float] = None
    model: RegularizerModel = RegularizerModel.DTV
    workers: int = Field(default_factory=lambda: settings.WORKERS)

    n_problems: int = 500
    prox_p: Optional[float] = None
    oracle_n: int = 2001

    truth: Dict[str, float] = Field(default_factory=lambda: dict(settings.BENCH_TRUTH))
    sample_sizes: List[int] = Field(default_factory=lambda: list(settings.BENCH_SAMPLE_SIZES))
    runs: int = Field(default_factory=lambda: settings.BENCH_RUNS)

    fixture: str = "stripes"
    width: int = 64
    height: int = 64
    bit_depth: int = 8
    ellipse_stride: int = 1

    @field_validator("input", "output", "out_dir", "clean", "degraded", "maps", mode="before")
    @classmethod
    def _check_path(cls, value):
        if value is not None and str(value).strip() == "":
            raise DomainError("Paths must be non-empty")
        return value

    @field_validator("bit_depth")
    @classmethod
    def _check_depth(cls, value: int) -> int:
        if value not in (8, 16):
            raise DomainError(f"Bit depth must be 8 or 16, got {value}")
        return value

    def require(self, *names: str) -> None:
        """Raise DomainError unless every named field is set."""
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise DomainError(f"Command {self.command!r} requires: {', '.join('--' + m.replace('_', '-') for m in missing)}")

    def psf(self) -> PsfSpec:
        return make_psf(self.psf_band, self.psf_sigma)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            tau=self.tau,
            beta_r=self.beta_r,
            beta_t=self.beta_t,
            max_iters=self.max_iters,
            stop_tol=self.stop_tol,
            warmup_iters=self.warmup_iters,
            prox=ProxConfig(),
        )

    def estimator_config(self, benchmark: bool = False) -> EstimatorConfig:
        p_max = self.p_max
        if p_max is None:
            p_max = settings.P_MAX_BENCH if benchmark else settings.P_MAX_RESTORE
        return EstimatorConfig(p_min=self.p_min, p_max=p_max)


def load_config_file(path: Path) -> Dict[str, Any]:
    """Read a JSON object of RunConfig fields."""
    try:
        with open(path) as handle:
            values = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise DomainError(f"Cannot read config file {path}: {exc}") from exc
    if not isinstance(values, dict):
        raise DomainError(f"Config file {path} must hold a JSON object")
    return {key.replace("-", "_"): value for key, value in values.items()}


def resolve_run_config(command: str, flags: Dict[str, Any], config_file: Optional[Path] = None) -> RunConfig:
    """Merge Settings defaults, an optional JSON file and explicit flags.

    Flags whose value is None count as not given.
    """
    values: Dict[str, Any] = {}
    if config_file is not None:
        values.update(load_config_file(config_file))
        logger.info(f"Loaded config file {config_file}")
    values.update({key: value for key, value in flags.items() if value is not None})
    values["command"] = command
    return RunConfig(**values)
