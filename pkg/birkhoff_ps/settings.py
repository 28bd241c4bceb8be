"""
Environment configuration, logging setup and the shared console
"""
import logging
import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator
from rich.console import Console
from rich.logging import RichHandler

load_dotenv()

console = Console()

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseModel):
    """Process-wide settings read from the environment"""

    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    log_level: str = "WARNING"

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in _LOG_LEVELS:
            raise ValueError(f"log level must be one of {', '.join(_LOG_LEVELS)}, got {value!r}")
        return value

    @classmethod
    def from_env(cls) -> "Settings":
        values = {}
        threads = os.getenv("BIRKHOFF_PS_THREADS")
        if threads:
            values["threads"] = int(threads)
        level = os.getenv("BIRKHOFF_PS_LOG_LEVEL")
        if level:
            values["log_level"] = level
        return cls(**values)


def get_settings() -> Settings:
    return Settings.from_env()


def configure_logging(level: Optional[str] = None) -> logging.Logger:
    """Attach a single RichHandler to the package logger"""
    level = Settings(log_level=level).log_level if level else get_settings().log_level
    logger = logging.getLogger("birkhoff_ps")
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=console, show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False
    return logger
