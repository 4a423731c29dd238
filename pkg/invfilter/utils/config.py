# invfilter/utils/config.py
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from typing import Literal


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="INVFILTER_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Logging - read from INVFILTER_LOG
    LOG: Literal["error", "info", "debug"] = "info"

    # Membership and numerical tolerances
    MEMBERSHIP_TOL: float = Field(1e-9, gt=0)
    FD_STEP: float = Field(1e-6, gt=0)
    FD_RTOL: float = Field(1e-4, gt=0)

    # Scenario defaults when a file omits them
    DEFAULT_K: float = Field(1.0, gt=0)
    DEFAULT_EPSILON: float = Field(1e-2, gt=0)

    # Sampling budgets
    VALIDATION_STATE_SAMPLES: int = Field(2000, ge=1)
    VALIDATION_CONTROL_GRID: int = Field(21, ge=1)
    EQUIVALENCE_SAMPLES: int = Field(10000, ge=1)

    # Monitors
    MONITOR_TOL: float = Field(1e-3, gt=0)
    CONVERGENCE_TOL: float = Field(1e-2, gt=0)
    FIT_TRANSIENT_FRACTION: float = Field(0.05, ge=0, lt=1)

    # Vanishing-gradient check near the boundary of C
    BOUNDARY_BAND: float = Field(1e-3, gt=0)
    GRADIENT_FLOOR: float = Field(1e-6, gt=0)

    # Solver
    SOLVER_MAX_ITER: int = Field(200, ge=1)
    ORACLE_REFINEMENTS: int = Field(4, ge=0)


# Create settings instance
settings = Settings()
