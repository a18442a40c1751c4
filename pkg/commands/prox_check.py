import logging
from typing import Optional

import numpy as np
import pandas as pd

from config.run_config import RunConfig
from core.base_command import EXIT_CHECK_FAILED, BaseCommand, CommandResponse
from core.image_io import write_table
from core.types import regularizer_matrix
from restoration.prox import ProxProblem, prox_dtv_batch, prox_oracle

logger = logging.getLogger(__name__)

GAP_TOL = 1e-8
CLOSED_FORM_TOL = 1e-10


def random_problems(n: int, seed: int, p: Optional[float] = None) -> dict:
    """Random prox instances: p in [0.1, 2], kappa in [1, 50], beta in [0.1, 100], ||q|| in [0, 10]."""
    rng = np.random.default_rng(seed)
    p_values = np.full(n, p) if p is not None else rng.uniform(0.1, 2.0, n)
    kappa = rng.uniform(1.0, 50.0, n)
    lam_min = rng.uniform(0.2, 2.0, n)
    theta = rng.uniform(0.0, np.pi, n)
    matrices = regularizer_matrix(np.sqrt(kappa * lam_min), np.sqrt(lam_min), theta)
    beta = 10.0 ** rng.uniform(-1.0, 2.0, n)
    radius = rng.uniform(0.0, 10.0, n)
    angle = rng.uniform(0.0, 2.0 * np.pi, n)
    q = radius[:, None] * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    return {"q": q, "A": matrices, "p": p_values, "beta": beta, "kappa": kappa}


def quadratic_prox(q: np.ndarray, matrices: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Closed form for p = 2: t = beta (2A + beta I)^{-1} q."""
    system = 2.0 * matrices + beta[:, None, None] * np.eye(2)[None]
    return np.linalg.solve(system, (beta[:, None] * q)[..., None])[..., 0]


class ProxCheckCommand(BaseCommand):
    """Randomised comparison of the prox solver against a brute-force grid"""

    def __init__(self):
        super().__init__(name="prox-check", role="Verifies prox_dtv against the grid oracle")

    def execute(self, request: RunConfig) -> CommandResponse:
        problems = random_problems(request.n_problems, request.seed, request.prox_p)
        solutions = prox_dtv_batch(problems["q"], problems["A"], problems["p"], problems["beta"])

        rows = []
        for i in range(request.n_problems):
            prob = ProxProblem(q=problems["q"][i], A=problems["A"][i], p=problems["p"][i], beta=problems["beta"][i])
            oracle = prox_oracle(prob, grid_n=request.oracle_n)
            value = float(prob.objective(solutions[i]))
            oracle_value = float(prob.objective(oracle))
            rows.append((i, prob.p, problems["kappa"][i], prob.beta, float(np.linalg.norm(prob.q)), value, oracle_value, value - oracle_value))
        table = pd.DataFrame(rows, columns=["problem", "p", "kappa", "beta", "q_norm", "f_prox", "f_oracle", "gap"])

        max_gap = float(table["gap"].max()) if len(table) else 0.0
        failures = int((table["gap"] > GAP_TOL).sum())
        data = {"n_problems": request.n_problems, "max_gap": max_gap, "failures": failures}

        quadratic = problems["p"] == 2.0
        if np.any(quadratic):
            exact = quadratic_prox(problems["q"][quadratic], problems["A"][quadratic], problems["beta"][quadratic])
            error = float(np.max(np.abs(solutions[quadratic] - exact)))
            data["closed_form_error"] = error
            if error > CLOSED_FORM_TOL:
                failures += 1
                logger.error(f"p = 2 closed form mismatch: {error:.3e}")

        request.out_dir.mkdir(parents=True, exist_ok=True)
        data["report"] = str(self.record_output(write_table(table, request.out_dir / "prox_check.csv")))
        logger.info(f"prox-check: {request.n_problems} problems, max gap {max_gap:.3e}, {failures} failures")
        if failures:
            return CommandResponse(
                success=False,
                message=f"prox-check failed on {failures} problems",
                data=data,
                errors=[f"max F-gap {max_gap:.3e} exceeds {GAP_TOL:g}"],
                exit_code=EXIT_CHECK_FAILED,
            )
        return CommandResponse(success=True, message=f"prox-check passed, max F-gap {max_gap:.3e}", data=data)
