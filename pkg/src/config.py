"""Configuration management using pydantic-settings."""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Simulator settings loaded from BWSNN_* environment variables and .env file."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="BWSNN_",
        case_sensitive=False,
        extra="ignore",
    )

    # Timing
    ACCUM_DELAY: int = Field(default=1, ge=0)  # column accumulation stages
    CLOCK_HZ: float = 100e6

    # Area coefficients in um^2 (90nm standard cells)
    PE_AREA_UM2: float = 210.0  # per PE
    CHAIN_AREA_UM2: float = 15.0  # per buffer word
    LOCAL_AREA_UM2: float = 40.0  # per neuron record
    REFERENCE_NODE_NM: float = 90.0
    NORMALIZED_NODE_NM: float = 28.0

    # Neuron defaults
    DEFAULT_RESET_MODE: str = "subtractive"

    # Design-space sweeps
    SWEEP_WORKERS: int = 4
    MAX_SWEEP_CANDIDATES: int = 4096

    # Data paths
    NETWORKS_PATH: str = "config/networks"
    SWEEPS_PATH: str = "config/sweeps"

    # Logging
    LOG_LEVEL: str = "INFO"


# Global settings instance
settings = Settings()
