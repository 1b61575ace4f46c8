"""Command implementations for the splinelens CLI."""

from .concentration import concentration_command
from .config import config_reset_command, config_set_command, config_show_command
from .jitter import jitter_command
from .logs import logs_clear_command, logs_show_command, logs_view_command
from .partition import partition_command
from .stats import stats_command
from .train import train_command
from .verify import verify_command

__all__ = [
    # Experiment commands
    "partition_command",
    "verify_command",
    "concentration_command",
    "jitter_command",
    "train_command",
    "stats_command",
    # Config commands
    "config_show_command",
    "config_set_command",
    "config_reset_command",
    # Logs commands
    "logs_show_command",
    "logs_view_command",
    "logs_clear_command",
]
