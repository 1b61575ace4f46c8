"""Logging package for splinelens.

File-based logging with per-process log files and 7-day retention.
"""

from .setup import (
    LoggingSetupError,
    cleanup_old_log_files,
    get_logger,
    log_config_info,
    log_error,
    log_experiment,
    setup_logging,
)

__all__ = [
    "LoggingSetupError",
    "cleanup_old_log_files",
    "get_logger",
    "log_config_info",
    "log_error",
    "log_experiment",
    "setup_logging",
]
