"""File logging for splinelens.

Each process writes ``splinelens_<date>_<pid>.log`` in the user log
directory, so parallel runs never interleave. Files older than a week are
removed whenever logging is set up. Nothing is logged to the console; the CLI
reports through rich panels instead.
"""

import logging
import os
import time
from datetime import datetime
from pathlib import Path

import appdirs

from ..config import Config, ExperimentConfig

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
RETENTION_DAYS = 7


class LoggingSetupError(Exception):
    """Raised when the log directory or log file cannot be opened."""

    pass


def cleanup_old_log_files(log_dir: Path, retention_days: int = RETENTION_DAYS) -> None:
    """Delete ``splinelens_*.log`` files last modified before the retention window."""
    if not log_dir.exists():
        return
    cutoff = time.time() - retention_days * 86_400
    for path in log_dir.glob("splinelens_*.log"):
        try:
            if path.stat().st_mtime < cutoff:
                path.unlink()
        except OSError:
            # Another process may hold or have removed it.
            continue


def _generate_log_filename() -> str:
    return f"splinelens_{datetime.now():%Y-%m-%d}_{os.getpid()}.log"


def setup_logging(
    config: Config | None = None, log_dir: Path | None = None
) -> logging.Logger:
    """Route the ``splinelens`` logger tree into this process's log file.

    Calling it again replaces the previous file handler.

    Args:
        config: Settings supplying the level; read from disk when omitted.
        log_dir: Where log files go; defaults to the user log directory.

    Raises:
        LoggingSetupError: If the directory or file cannot be created.
    """
    if config is None:
        from ..config import get_config

        config = get_config()
    log_dir = Path(log_dir or appdirs.user_log_dir("splinelens"))

    try:
        log_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise LoggingSetupError(f"Failed to create log directory {log_dir}: {e}") from e
    cleanup_old_log_files(log_dir)

    root = logging.getLogger("splinelens")
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(logging.getLevelName(str(config.log_level).upper()))
    if not isinstance(root.level, int) or root.level == logging.NOTSET:
        root.setLevel(logging.INFO)

    path = log_dir / _generate_log_filename()
    try:
        handler = logging.FileHandler(path, encoding="utf-8")
    except OSError as e:
        raise LoggingSetupError(f"Failed to open log file {path}: {e}") from e
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.propagate = False
    return root


def get_logger(name: str = "splinelens") -> logging.Logger:
    return logging.getLogger(name)


def log_config_info(logger: logging.Logger, config: Config) -> None:
    logger.info("splinelens starting up")
    logger.info("Settings file: %s", config.config_file_path)
    logger.info("Output root: %s", config.output_root)
    logger.info("Threads: %d, eps_bn: %g", config.threads, config.eps_bn)
    logger.info("Log level: %s", config.log_level)


def log_experiment(logger: logging.Logger, experiment: ExperimentConfig) -> None:
    logger.info(
        "Running %s with seed %d into %s",
        experiment.command,
        experiment.seed,
        experiment.output_dir(),
    )


def log_error(
    logger: logging.Logger, error_msg: str, exception: Exception | None = None
) -> None:
    """Log ``error_msg``, with the traceback of ``exception`` when given."""
    if exception is None:
        logger.error(error_msg)
    else:
        logger.error("%s: %s", error_msg, exception, exc_info=True)
