"""
Run configuration and settings management.

Settings are layered: dataclass defaults, then an optional JSON settings
file, then environment variables, then command-line flags.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from src.errors import UsageError
from src.services.openalex_client import OpenAlexConfig

logger = logging.getLogger(__name__)

CACHE_FILE_NAME = "works.jsonl"
OUTPUT_FORMATS = ("csv", "json")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

# Environment variable -> RunConfig field
ENV_VARIABLES = {
    "KE_MAILTO": "contact_email",
    "KE_CACHE_DIR": "cache_dir",
    "KE_RPS": "rate_limit_rps",
    "KE_PARALLELISM": "parallelism",
    "KE_FORMAT": "output_format",
    "KE_OFFLINE": "offline",
    "KE_COVERAGE_THRESHOLD": "coverage_threshold",
    "KE_LOG_LEVEL": "log_level",
}


@dataclass
class RunConfig:
    """Settings shared by every command."""

    contact_email: Optional[str] = None
    cache_dir: str = ".ke-cache"
    parallelism: int = 4
    rate_limit_rps: float = 5.0
    coverage_threshold: float = 0.8
    output_format: str = "csv"
    offline: bool = False

    # Network behaviour
    max_retries: int = 4
    timeout: float = 30.0
    backoff_multiplier: float = 0.5

    # Logging settings
    log_level: str = "WARNING"
    log_file: Optional[str] = None

    def __post_init__(self):
        if self.parallelism < 1:
            raise UsageError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.rate_limit_rps <= 0:
            raise UsageError(f"rate limit must be > 0 requests/second, got {self.rate_limit_rps}")
        if not 0.0 <= self.coverage_threshold <= 1.0:
            raise UsageError(f"coverage threshold must be in [0, 1], got {self.coverage_threshold}")
        if self.output_format not in OUTPUT_FORMATS:
            raise UsageError(f"output format must be one of {OUTPUT_FORMATS}")
        self.log_level = self.log_level.upper()
        if self.log_level not in LOG_LEVELS:
            raise UsageError(f"log level must be one of {LOG_LEVELS}")

    @property
    def cache_path(self) -> Path:
        return Path(self.cache_dir) / CACHE_FILE_NAME

    def client_config(self) -> OpenAlexConfig:
        """Derive the OpenAlex client configuration."""
        return OpenAlexConfig(
            mailto=self.contact_email,
            requests_per_second=self.rate_limit_rps,
            max_retries=self.max_retries,
            backoff_multiplier=self.backoff_multiplier,
            timeout=self.timeout,
            parallelism=self.parallelism,
            offline=self.offline,
        )

    def require_contact_email(self):
        """Live harvests must identify themselves to OpenAlex."""
        if not self.offline and not self.contact_email:
            raise UsageError(
                "live OpenAlex access needs a contact email: pass --mailto or set KE_MAILTO "
                "(or use --offline with a populated cache)"
            )


def _coerce(name: str, value: Any) -> Any:
    """Convert a string setting to the type of the RunConfig field."""
    if not isinstance(value, str):
        return value
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    try:
        if kind in (int, "int"):
            return int(value)
        if kind in (float, "float"):
            return float(value)
        if kind in (bool, "bool"):
            return value.strip().lower() in ("1", "true", "yes", "on")
    except ValueError as e:
        raise UsageError(f"invalid value for {name}: {value!r}") from e
    return value


class SettingsManager:
    """Loads and saves the optional settings file."""

    def __init__(self, config_dir: Optional[str] = None):
        """
        Initialize settings manager.

        Args:
            config_dir: Custom configuration directory (defaults to
                $KE_CONFIG_DIR, then ~/.config/ke-toolkit)
        """
        if config_dir:
            self.config_dir = Path(config_dir)
        elif os.environ.get("KE_CONFIG_DIR"):
            self.config_dir = Path(os.environ["KE_CONFIG_DIR"])
        else:
            self.config_dir = Path.home() / ".config" / "ke-toolkit"

        self.config_file = self.config_dir / "settings.json"

    def load_file_settings(self) -> Dict[str, Any]:
        """
        Read the settings file if present.

        Returns:
            Dict[str, Any]: Known settings from the file (unknown keys are ignored)
        """
        if not self.config_file.exists():
            return {}

        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read settings file {self.config_file}: {e}") from e

        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(data) - known)
        if unknown:
            logger.warning(f"Ignoring unknown settings in {self.config_file}: {', '.join(unknown)}")
        return {k: v for k, v in data.items() if k in known}

    def save_settings(self, config: RunConfig) -> Path:
        """
        Write a configuration to the settings file.

        Returns:
            Path: Location written
        """
        self.config_dir.mkdir(parents=True, exist_ok=True)
        with open(self.config_file, "w", encoding="utf-8") as f:
            json.dump(asdict(config), f, indent=2, ensure_ascii=False)
        return self.config_file

    def resolve(self, overrides: Optional[Mapping[str, Any]] = None,
                environ: Optional[Mapping[str, str]] = None) -> RunConfig:
        """
        Build the effective run configuration.

        Args:
            overrides: Values from command-line flags (None entries are ignored)
            environ: Environment mapping (defaults to os.environ)

        Returns:
            RunConfig: Validated configuration
        """
        environ = os.environ if environ is None else environ
        values: Dict[str, Any] = self.load_file_settings()

        for variable, name in ENV_VARIABLES.items():
            if environ.get(variable):
                values[name] = environ[variable]

        for name, value in (overrides or {}).items():
            if value is not None:
                values[name] = value

        return RunConfig(**{name: _coerce(name, value) for name, value in values.items()})
