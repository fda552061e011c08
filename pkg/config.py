import json
import logging
import sys
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Union

from dotenv import load_dotenv
from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from exceptions import ConfigError
from schema import RunConfig

load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# ============================================
# SETTINGS
# ============================================

class Settings(BaseSettings):
    """Service and CLI defaults, overridable through SQPC_* variables or .env"""
    model_config = SettingsConfigDict(env_prefix="SQPC_", env_file=".env", extra="ignore")

    default_threshold: float = 0.0
    default_shots: int = 1024
    default_trials: int = 100
    log_level: str = "INFO"
    workers: int = 1
    # comma separated
    allowed_origins: str = "http://localhost:3000,http://127.0.0.1:3000"
    host: str = "127.0.0.1"
    port: int = 8000

    @property
    def origins(self) -> List[str]:
        return [origin.strip() for origin in self.allowed_origins.split(",") if origin.strip()]


@lru_cache
def get_settings() -> Settings:
    return Settings()


def configure_logging(level: Union[str, int, None] = None) -> None:
    """One stderr handler on the root logger; stdout stays free for documents"""
    level = level or get_settings().log_level
    if isinstance(level, str):
        level = level.upper()
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)


# ============================================
# RUN CONFIGURATION FILES
# ============================================

def _field_path(location) -> str:
    return ".".join(str(part) for part in location) or "<root>"


def parse_run_config(data: Dict[str, Any], source: str = "config") -> RunConfig:
    """
    Validate a RunConfig mapping.

    Raises:
        ConfigError: naming the offending field path
    """
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(f"{_field_path(err['loc'])}: {err['msg']}" for err in exc.errors())
        raise ConfigError(f"{source}: {problems}")


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a JSON run configuration and check it against RunConfig.

    Returns the raw mapping, so that command-line flags can be layered on top
    before the final validation.

    Raises:
        ConfigError: unreadable file, JSON syntax error (with line and column)
            or an invalid field
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config file ({exc.strerror})")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    parse_run_config(data, source=str(path))
    return data
