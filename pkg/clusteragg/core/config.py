"""
Runtime configuration management using Pydantic Settings.
"""
from pathlib import Path
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from clusteragg import __version__


class Settings(BaseSettings):
    """Process-wide settings with environment variable support (prefix ``CLUSTERAGG_``)."""

    model_config = SettingsConfigDict(
        env_prefix="CLUSTERAGG_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = "clusteragg"
    code_version: str = __version__
    debug: bool = Field(default=False)

    # Output
    output_root: Path = Field(default=Path("results"), description="Default root for run outputs")

    # Logging
    log_level: str = Field(default="INFO")
    log_json: bool = Field(default=False)
    log_file: Optional[Path] = Field(default=None)

    # Numerics
    enumeration_cap: int = Field(default=14, ge=1, description="Largest n for exhaustive subset oracles")
    geometry_tolerance: float = Field(default=1e-9, gt=0)

    # Matrix execution
    default_jobs: int = Field(default=1, ge=1, description="Parallel matrix cells")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Normalize and validate log level names."""
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return level


# Global settings instance
settings = Settings()
