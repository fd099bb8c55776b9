from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Run ledger
    DATABASE_URL: str = "sqlite:///inffusion_runs.db"
    LEDGER_ENABLED: bool = True

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None
    LOG_COLORED: bool = True
    LOGTAIL_TOKEN: Optional[str] = None

    # Application
    APP_NAME: str = "INFFusion"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False

    # Experiments
    DEFAULT_SEED: int = 0
    EVAL_WORKERS: int = 1

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=False, extra="ignore")


# Global settings instance
settings = Settings()
