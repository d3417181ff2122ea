from typing import Literal
from pydantic import field_validator, ConfigDict
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Environment
    environment: Literal["development", "ci", "production"] = "development"

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # File paths
    runs_directory: str = "./runs"

    # Worker threads used when a command does not pass --threads
    default_threads: int = 1

    @field_validator('log_level')
    @classmethod
    def validate_log_level(cls, v):
        """Accept only standard logging level names"""
        level = v.upper()
        if level not in {"CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"}:
            raise ValueError(f"Unknown log level: {v}")
        return level

    @field_validator('default_threads')
    @classmethod
    def validate_default_threads(cls, v, info):
        """CI runs stay single-threaded so timings are comparable"""
        if v < 1:
            raise ValueError('default_threads must be at least 1')
        if hasattr(info, 'data') and info.data.get('environment') == 'ci':
            return 1
        return v

    model_config = ConfigDict(env_file=".env", env_prefix="NCDETECT_", extra="ignore")


settings = Settings()
