import sys
from functools import lru_cache

import loguru
from pydantic import field_validator
from pydantic_settings import BaseSettings
from pydantic_settings import SettingsConfigDict

logger = loguru.logger


class Settings(BaseSettings):
    """Resource caps and numerical tolerances, overridable via HAMLAW_* variables"""

    aut_cap: int = 14
    dp_max_n: int = 24
    backtrack_max_n: int = 30
    node_budget: int = 50_000_000
    k_max: int = 8
    enumerate_cap: int = 100_000
    overlap_max_cycles: int = 5000
    double_plant_max_cycles: int = 5000
    double_plant_max_tries: int = 10_000
    quadrature_tol: float = 1e-8
    quadrature_max_order: int = 1024
    workers: int = 1
    log_level: str = "INFO"
    model_config = SettingsConfigDict(
        env_prefix="HAMLAW_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    @field_validator(
        "aut_cap",
        "dp_max_n",
        "backtrack_max_n",
        "node_budget",
        "k_max",
        "enumerate_cap",
        "overlap_max_cycles",
        "double_plant_max_cycles",
        "double_plant_max_tries",
        "quadrature_max_order",
        "workers",
    )
    @classmethod
    def check_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("Resource caps must be positive")
        return value

    @field_validator("quadrature_tol")
    @classmethod
    def check_tolerance(cls, value: float) -> float:
        if not 0 < value < 1:
            raise ValueError("quadrature_tol must lie in (0, 1)")
        return value


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()


def get_logger():
    return logger


def configure_logging(level: str | None = None) -> None:
    """Route log output to stderr at the requested level.

    Args:
        level (str | None, optional):
            Loguru level name; defaults to Settings.log_level.
    """
    logger.remove()
    logger.add(sys.stderr, level=(level or get_settings().log_level).upper())
