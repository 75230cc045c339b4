"""
Configuration settings for the Rexp3 non-stationary bandit lab
"""
from typing import Optional
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings loaded from environment variables (prefix REXP3_) or .env"""

    # Output / parallelism overrides (flags > environment > experiment config)
    output_dir: Optional[str] = Field(default=None, description="Overrides ExperimentConfig.output_dir")
    workers: Optional[int] = Field(default=None, ge=1, description="Overrides ExperimentConfig.workers")

    # Logging Configuration
    log_level: str = Field(default="INFO")
    log_file: Optional[str] = Field(default=None)

    # Progress bars for sweeps
    progress: bool = Field(default=True)

    model_config = SettingsConfigDict(
        env_prefix="REXP3_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )


def get_settings() -> Settings:
    """Build a fresh Settings instance from the current environment"""
    return Settings()
