from typing import Dict, List
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Project settings and configuration"""

    # Degradation / PSF
    PSF_BAND: int = 9
    PSF_SIGMA: float = 2.0

    # Solver (ADMM with discrepancy principle)
    TAU: float = 1.01
    BETA_R: float = 10.0
    BETA_T: float = 10.0
    MAX_ITERS: int = 500
    STOP_TOL: float = 1e-4
    WARMUP_ITERS: int = 5

    # BGGD estimator
    P_MIN: float = 0.1
    P_MAX_RESTORE: float = 2.0  # admissible range for restoration maps
    P_MAX_BENCH: float = 5.0  # admissible range for estimator benchmarks
    RHO_CAP: float = 1.0 - 1e-6
    GRID_P: int = 8
    GRID_PHI: int = 16
    GRID_RHO: int = 8
    REFINE_TOL: float = 1e-6
    MAX_EVALS: int = 500
    DEGENERACY_TOL: float = 1e-6
    M_FLOOR: float = 1e-12  # scale used when a neighborhood is identically zero
    HALF_WIDTH: int = 3  # 7x7 neighborhoods
    WORKERS: int = 1

    # Proximal map
    KAPPA_ISO_TOL: float = 1.0 + 1e-9
    N_GRID_1D: int = 64
    TOL_1D: float = 1e-10

    # Estimator benchmark protocol
    BENCH_TRUTH: Dict[str, float] = {
        "p": 1.0,
        "e1": 1.4,
        "theta_deg": 45.0,
        "m": 0.3,
    }
    BENCH_SAMPLE_SIZES: List[int] = [10, 100, 1000, 10000, 100000, 1000000]
    BENCH_RUNS: int = 200

    SEED: int = 0
    LOG_LEVEL: str = "INFO"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="DTV_",
        case_sensitive=True,
        extra="ignore",
    )


# Create a global settings instance
settings = Settings()
