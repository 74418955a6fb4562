from functools import lru_cache
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="HODGEDIRAC_", env_file=".env", extra="ignore")

    # Singular values below harmonic_tol_rel * sigma_max count as zero
    harmonic_tol_rel: float = 1e-9
    # Above this many DOFs in one degree the harmonic candidates come from shift-invert
    harmonic_dense_limit: int = 1200

    solve_tol: float = 1e-10
    residual_tol: float = 1e-9
    refine_steps: int = 3

    # Above this many unknowns eigenproblems switch to shift-invert
    dense_eig_limit: int = 2500

    base_resolution: int = 4
    log_level: str = "INFO"

    # e.g. sqlite:///hodgedirac.sqlite; runs are only recorded when set
    database_url: Optional[str] = None


@lru_cache
def get_settings() -> Settings:
    return Settings()
