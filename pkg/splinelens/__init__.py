"""splinelens: the spline-partition view of deep networks with batch normalization.

Exact 2-D partition tracing, folded-hyperplane geometry, BN statistics and
their mini-batch jitter, and a seeded verification battery.
"""

import tomllib
from importlib import metadata
from pathlib import Path

from .config import Config, ConfigError, ExperimentConfig, get_config
from .logging import LoggingSetupError, get_logger, setup_logging
from .utils.output import MessageType, OutputFormatter, get_formatter


def _get_version() -> str:
    """Installed distribution version, else the one in a source checkout."""
    try:
        return metadata.version("splinelens")
    except metadata.PackageNotFoundError:
        pass
    pyproject = Path(__file__).resolve().parent.parent / "pyproject.toml"
    try:
        project = tomllib.loads(pyproject.read_text(encoding="utf-8"))["project"]
        return project["version"]
    except (OSError, KeyError, tomllib.TOMLDecodeError):
        return "0+unknown"


__version__ = _get_version()

__all__ = [
    "__version__",
    "Config",
    "ConfigError",
    "ExperimentConfig",
    "get_config",
    "LoggingSetupError",
    "get_logger",
    "setup_logging",
    "MessageType",
    "OutputFormatter",
    "get_formatter",
]
