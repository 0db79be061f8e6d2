"""
Centralized runtime settings.

Precedence, lowest first: model defaults, the TOML settings file, ``SNAPLIN_*``
environment variables, and finally CLI flags (applied by the CLI on top of the
loaded object).
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

try:  # Python 3.11+
    import tomllib  # type: ignore[attr-defined]
except ModuleNotFoundError:  # pragma: no cover - fallback for older interpreters
    import tomli as tomllib  # type: ignore[attr-defined, import-not-found, no-redef]

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from .config import EvalConfig, InteractionConfig, TrainConfig


class AppSettings(BaseSettings):
    """Project-wide settings loaded from a TOML file, env or .env files."""

    model_config = SettingsConfigDict(
        env_prefix="SNAPLIN_",
        env_nested_delimiter="__",
        env_file=".env",
        extra="ignore",
    )

    workspace_root: Path = Path("./runs")
    n_threads: int = Field(1, ge=1)
    deterministic: bool = True
    log_level: str = "INFO"
    train: TrainConfig = Field(default_factory=TrainConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig)
    interactions: InteractionConfig = Field(default_factory=InteractionConfig)

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        name = value.upper()
        if not isinstance(logging.getLevelName(name), int):
            raise ValueError(f"unknown log level '{value}'")
        return name

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        # File values arrive as init kwargs; the environment outranks them.
        return env_settings, dotenv_settings, init_settings, file_secret_settings

    def resolved_threads(self) -> int:
        """Worker count for partitioned reductions; forced to 1 when deterministic."""
        return 1 if self.deterministic else self.n_threads

    def log_level_number(self) -> int:
        return int(logging.getLevelName(self.log_level))


_CONFIG_ENV_VAR = "SNAPLIN_CONFIG_PATH"
_DEFAULT_CONFIG_FILE = Path("snaplin_settings.toml")


def _load_toml_config(path: Optional[Path] = None) -> Dict[str, Any]:
    """Load the first settings file found among the candidates."""
    candidates: List[Path] = []
    if path is not None:
        if not path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")
        candidates.append(path)
    config_override = os.getenv(_CONFIG_ENV_VAR)
    if config_override:
        candidates.append(Path(config_override))
    candidates.append(_DEFAULT_CONFIG_FILE)

    for candidate in candidates:
        if candidate.is_file():
            with candidate.open("rb") as handle:
                return tomllib.load(handle)
    return {}


def _flatten_config(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Translate grouped TOML sections into AppSettings keyword arguments."""
    data: Dict[str, Any] = {}

    runtime = raw.get("runtime", {})
    for key in ("workspace_root", "n_threads", "deterministic", "log_level"):
        if key in runtime:
            data[key] = runtime[key]

    train = dict(raw.get("train", {}))
    if "loss" in raw:
        train["loss"] = dict(raw["loss"])
    if "encoder" in raw:
        encoder = dict(raw["encoder"])
        if "zero_mask" in encoder:
            encoder["zero_mask"] = tuple(encoder["zero_mask"])
        train["encoder"] = encoder
    if train:
        data["train"] = train

    for section in ("evaluation", "interactions"):
        if section in raw:
            data[section] = dict(raw[section])
    return data


def load_settings(config_path: Optional[Path] = None) -> AppSettings:
    """Build settings from defaults, the TOML file, then the environment."""
    return AppSettings(**_flatten_config(_load_toml_config(config_path)))


settings = load_settings()
