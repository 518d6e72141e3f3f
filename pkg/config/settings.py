from pydantic_settings import BaseSettings, SettingsConfigDict
from pathlib import Path
from typing import List


class Settings(BaseSettings):
    """Application settings with environment variable support"""

    model_config = SettingsConfigDict(
        env_prefix='RETLAB_',
        env_file='.env',
        env_file_encoding='utf-8',
        case_sensitive=False,
        extra='ignore'
    )

    # Paths
    base_dir: Path = Path(__file__).parent.parent
    output_dir: Path = base_dir / "data" / "output"
    logs_dir: Path = base_dir / "logs"

    # Sweep-out series
    k_default: int = 4096
    k_exact: int = 4096          # rationals blow up in bit size past this
    stream_block: int = 32       # steps per float block in the log-space stream

    # Laplace criterion
    laplace_tolerance: float = 1e-9
    laplace_k_max: int = 50_000_000
    t_grid: List[float] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0]
    grid_slack: float = 1e-3

    # Roots and spectral radius
    root_tolerance: float = 1e-14
    root_scan_points: int = 4096
    power_iteration_tolerance: float = 1e-12
    power_iteration_max_iter: int = 200_000
    root_mismatch_tolerance: float = 1e-9
    min_fit_length: int = 64

    # Mixing
    psi_k_max: int = 64

    # Generalized hitting times
    state_budget: int = 1_000_000

    # Monte Carlo
    step_cap_factor: float = 1000.0
    mc_batch_size: int = 4096
    default_seed: int = 20240607
    tail_k_max: int = 20

    # Execution
    jobs: int = 1

    # Logging
    log_level: str = "INFO"
    log_to_file: bool = False
    show_progress: bool = False
    verbose: bool = False

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        # Create directories if they don't exist
        for directory in [self.output_dir, self.logs_dir]:
            directory.mkdir(parents=True, exist_ok=True)


# Global settings instance
settings = Settings()
