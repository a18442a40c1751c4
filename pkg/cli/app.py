#!/usr/bin/env python3
"""
Command-line front end for degradation, map estimation, restoration and checks.

Usage:
    python cli/app.py <command> [flags]
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

# Add the project root to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from pydantic import ValidationError

from commands import COMMANDS
from config.config import settings
from config.run_config import resolve_run_config
from core.base_command import EXIT_VALIDATION
from core.errors import DomainError
from restoration.models import RegularizerModel

logger = logging.getLogger(__name__)


def _shared_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, help="JSON file of parameters; flags override it")
    parent.add_argument("--out-dir", type=Path)
    parent.add_argument("--seed", type=int)
    parent.add_argument("--psf-band", type=int)
    parent.add_argument("--psf-sigma", type=float)
    parent.add_argument("--sigma", type=float, help="noise standard deviation")
    parent.add_argument("--bsnr", type=float, help="target BSNR in dB")
    parent.add_argument("--tau", type=float)
    parent.add_argument("--beta-r", type=float)
    parent.add_argument("--beta-t", type=float)
    parent.add_argument("--half-width", type=int)
    parent.add_argument("--p-min", type=float)
    parent.add_argument("--p-max", type=float)
    parent.add_argument("--max-iters", type=int)
    parent.add_argument("--stop-tol", type=float)
    parent.add_argument("--warmup-iters", type=int)
    parent.add_argument("--workers", type=int)
    parent.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parent


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_flags()
    parser = argparse.ArgumentParser(description="Space-variant directional TV image restoration")
    verbs = parser.add_subparsers(dest="command", required=True)

    degrade = verbs.add_parser("degrade", parents=[shared], help="blur and add noise to a clean image")
    degrade.add_argument("input", type=Path)
    degrade.add_argument("-o", "--output", type=Path)

    estimate = verbs.add_parser("estimate-maps", parents=[shared], help="estimate BGGD parameter maps")
    estimate.add_argument("input", type=Path)
    estimate.add_argument("--ellipse-stride", type=int)

    restore = verbs.add_parser("restore", parents=[shared], help="restore a degraded image")
    restore.add_argument("input", type=Path)
    restore.add_argument("-o", "--output", type=Path)
    restore.add_argument("--maps", type=Path, help="directory with p/e1/theta/m CSV grids")
    restore.add_argument("--model", choices=[m.value for m in RegularizerModel])
    restore.add_argument("--clean", type=Path, help="clean reference for ISNR/SSIM")

    prox = verbs.add_parser("prox-check", parents=[shared], help="compare the prox against a grid oracle")
    prox.add_argument("--n-problems", type=int)
    prox.add_argument("--p", dest="prox_p", type=float, help="fix the exponent of every problem")
    prox.add_argument("--oracle-n", type=int)

    bench = verbs.add_parser("estimator-bench", parents=[shared], help="Monte-Carlo study of the ML estimator")
    bench.add_argument("--sample-sizes", type=int, nargs="+")
    bench.add_argument("--runs", type=int)
    bench.add_argument("--truth", type=json.loads, help='JSON such as {"p": 1, "e1": 1.4, "theta_deg": 45, "m": 0.3}')

    metrics = verbs.add_parser("metrics", parents=[shared], help="quality of an image against a reference")
    metrics.add_argument("input", type=Path)
    metrics.add_argument("--clean", type=Path, required=True)
    metrics.add_argument("--degraded", type=Path, help="degraded image, enables BSNR and ISNR")
    metrics.add_argument("-o", "--output", type=Path)

    fixture = verbs.add_parser("fixture", parents=[shared], help="write a synthetic test image")
    fixture.add_argument("fixture", choices=["stripes", "edge", "geometric", "checkerboard", "constant"])
    fixture.add_argument("-o", "--output", type=Path)
    fixture.add_argument("--width", type=int)
    fixture.add_argument("--height", type=int)
    fixture.add_argument("--bit-depth", type=int, choices=[8, 16])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    flags = vars(args)
    command = flags.pop("command")
    config_file = flags.pop("config")
    verbose = flags.pop("verbose")

    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        request = resolve_run_config(command, flags, config_file)
    except (DomainError, ValidationError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_VALIDATION

    response = COMMANDS[command]().run(request)
    if response.success:
        logger.info(response.message)
    else:
        logger.error(f"{response.message}: {'; '.join(response.errors)}")
    return response.exit_code


if __name__ == "__main__":
    sys.exit(main())
