"""Configuration for splinelens.

``Config`` manages the per-user ``config.toml``; ``ExperimentConfig`` resolves
the configuration of a single command run.
"""

from .experiment import COMMANDS, ExperimentConfig, defaults_for, parse_override
from .manager import OUTPUT_ROOT_ENV, Config, ConfigError, get_config, settings_file

__all__ = [
    "COMMANDS",
    "Config",
    "ConfigError",
    "ExperimentConfig",
    "OUTPUT_ROOT_ENV",
    "defaults_for",
    "get_config",
    "parse_override",
    "settings_file",
]
