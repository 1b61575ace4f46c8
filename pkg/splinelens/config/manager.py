"""User settings for splinelens.

``config.toml`` in the per-user config directory holds what applies to every
run: the log level, the default output root and the compute defaults. The
file is created with comments on first use; keys missing from it fall back to
``SETTINGS``.
"""

import os
import tomllib
from pathlib import Path
from typing import Any

import appdirs
import tomli_w

OUTPUT_ROOT_ENV = "SPLINELENS_OUTPUT_ROOT"
FALLBACK_OUTPUT_ROOT = "splinelens-out"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

SETTINGS: dict[str, dict[str, Any]] = {
    "logging": {"level": "INFO"},
    "output": {"root": ""},
    "compute": {"threads": 1, "eps_bn": 0.0, "region_budget": 1_000_000},
}


class ConfigError(Exception):
    """Raised for unreadable, unwritable or invalid configuration."""

    pass


DEFAULT_CONFIG_TEXT = """# splinelens user settings

[logging]
# One of "DEBUG", "INFO", "WARNING", "ERROR". DEBUG also logs per-layer
# tracing and sampling details.
level = "INFO"

[output]
# Directory that receives one subdirectory per command.
# An empty value means ./splinelens-out. The SPLINELENS_OUTPUT_ROOT
# environment variable takes precedence.
root = ""

[compute]
# Worker threads; results are identical for every value.
threads = 1

# Floor for BN sigma. 0 turns zero-variance units into errors.
eps_bn = 0.0

# Abort partition tracing beyond this many regions.
region_budget = 1000000
"""


def _validated(section: str, key: str, value: Any) -> Any:
    """``value`` checked against the type and range of the known setting."""
    name = f"{section}.{key}"
    if section not in SETTINGS or key not in SETTINGS[section]:
        raise ConfigError(f"Unknown setting {name}")
    default = SETTINGS[section][key]
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, int | float):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{name} must be a string, got {value!r}")

    if name == "logging.level" and value.upper() not in LOG_LEVELS:
        raise ConfigError(f"logging.level must be one of {', '.join(LOG_LEVELS)}")
    if name in ("compute.threads", "compute.region_budget") and value < 1:
        raise ConfigError(f"{name} must be >= 1, got {value}")
    if name == "compute.eps_bn" and value < 0.0:
        raise ConfigError(f"compute.eps_bn must be >= 0, got {value}")
    return value


def settings_file(config_dir: Path | None = None) -> Path:
    """``config.toml`` in ``config_dir``, else in the user config directory."""
    if config_dir is None:
        config_dir = Path(appdirs.user_config_dir("splinelens"))
    return Path(config_dir) / "config.toml"


class Config:
    """The settings file, merged over ``SETTINGS``."""

    def __init__(self, config_dir: Path | None = None):
        """Open (and on first use create) ``config.toml``.

        Args:
            config_dir: Directory of the settings file; defaults to the
                platform's user config directory for splinelens.
        """
        self.config_file = settings_file(config_dir)
        self.config_dir = self.config_file.parent
        self._values: dict[str, dict[str, Any]] = {}
        self.reload()

    def reload(self) -> None:
        """Read the file again, writing the commented default if it is missing."""
        if not self.config_file.exists():
            try:
                self.config_dir.mkdir(parents=True, exist_ok=True)
                self.config_file.write_text(DEFAULT_CONFIG_TEXT, encoding="utf-8")
            except OSError as e:
                raise ConfigError(
                    f"Failed to create default config at {self.config_file}: {e}"
                ) from e
        try:
            stored = tomllib.loads(self.config_file.read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(
                f"Failed to load config from {self.config_file}: {e}"
            ) from e

        values = {section: dict(keys) for section, keys in SETTINGS.items()}
        try:
            for section, keys in stored.items():
                if not isinstance(keys, dict):
                    raise ConfigError(f"[{section}] must be a table")
                for key, value in keys.items():
                    values[section][key] = _validated(section, key, value)
        except ConfigError as e:
            raise ConfigError(f"Invalid config {self.config_file}: {e}") from e
        self._values = values

    @property
    def config_file_path(self) -> Path:
        return self.config_file

    @property
    def log_level(self) -> str:
        return str(self._values["logging"]["level"]).upper()

    @property
    def output_root(self) -> Path:
        """The environment variable, else ``[output] root``, else ./splinelens-out."""
        root = os.environ.get(OUTPUT_ROOT_ENV) or self._values["output"]["root"]
        return Path(root or FALLBACK_OUTPUT_ROOT)

    @property
    def threads(self) -> int:
        return int(self._values["compute"]["threads"])

    @property
    def eps_bn(self) -> float:
        return float(self._values["compute"]["eps_bn"])

    @property
    def region_budget(self) -> int:
        return int(self._values["compute"]["region_budget"])

    def get(self, section: str, key: str, default: Any = None) -> Any:
        return self._values.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value: Any) -> None:
        """Validate ``section.key = value`` and write the file.

        Raises:
            ConfigError: For unknown settings, wrong types or out-of-range
                values, and when the file cannot be written.
        """
        self._values[section][key] = _validated(section, key, value)
        self._write()

    def reset_to_defaults(self) -> None:
        self._values = {section: dict(keys) for section, keys in SETTINGS.items()}
        self._write()

    def get_all_sections(self) -> dict[str, dict[str, Any]]:
        return {section: dict(keys) for section, keys in self._values.items()}

    def _write(self) -> None:
        try:
            self.config_dir.mkdir(parents=True, exist_ok=True)
            self.config_file.write_text(tomli_w.dumps(self._values), encoding="utf-8")
        except OSError as e:
            raise ConfigError(
                f"Failed to save config to {self.config_file}: {e}"
            ) from e


def get_config(config_dir: Path | None = None) -> Config:
    return Config(config_dir)
