from pydantic_settings import BaseSettings
from typing import List, Tuple
from functools import lru_cache

class Settings(BaseSettings):
    """Configuración de la aplicación."""

    # Primal-dual solver
    solver_max_iters: int = 5000
    solver_check_every: int = 50
    solver_tol_gap: float = 1e-6
    solver_threads: int = 1

    # MPLP
    mplp_sweeps: int = 1000
    mplp_tol: float = 1e-9

    # Oracles
    brute_force_cap: int = 10_000_000
    dense_oracle_cap: int = 4_000_000  # entradas de la matriz densa

    # Generador (experimento de early stopping)
    gen_width: int = 20
    gen_height: int = 20
    gen_labels: int = 20

    # Denoising
    denoise_labels: int = 64
    denoise_lambda: float = 1.0
    denoise_sigma: float = 10.0
    denoise_outlier_rate: float = 0.05
    denoise_pairs: List[Tuple[float, float]] = [(24.0, 0.0), (8.0, 1.0), (3.2, 2.0)]

    # App Config
    app_name: str = "compactmrf"
    debug: bool = False
    log_level: str = "INFO"

    class Config:
        env_prefix = "COMPACTMRF_"
        env_file = ".env"
        env_file_encoding = "utf-8"

@lru_cache
def get_settings() -> Settings:
    return Settings()
