"""Logs commands: list, view and clear splinelens log files."""

from datetime import datetime
from pathlib import Path

import appdirs
import typer

from ...utils.output import MessageType, get_formatter
from ..error_handler import handles_errors


def get_log_directory() -> Path:
    return Path(appdirs.user_log_dir("splinelens"))


def get_log_files() -> list[Path]:
    """Log files, newest first."""
    log_dir = get_log_directory()
    if not log_dir.exists():
        return []
    return sorted(
        log_dir.glob("splinelens_*.log"), key=lambda f: f.stat().st_mtime, reverse=True
    )


def format_file_size(size_bytes: int) -> str:
    if size_bytes < 1024:
        return f"{size_bytes} B"
    size = size_bytes / 1024
    for unit in ("KB", "MB"):
        if size < 1024 or unit == "MB":
            break
        size /= 1024
    return f"{size:.1f} {unit}"


@handles_errors
def logs_show_command() -> None:
    """Show log files location and information."""
    output = get_formatter()
    log_files = get_log_files()
    if not log_files:
        output.print_box(
            f"No log files in {get_log_directory()}", MessageType.INFO, "Log Directory"
        )
        return
    output.print_table(
        f"Log files in {get_log_directory()}",
        ("file", "size", "modified"),
        (
            (
                log_file.name,
                format_file_size(log_file.stat().st_size),
                datetime.fromtimestamp(log_file.stat().st_mtime).strftime(
                    "%Y-%m-%d %H:%M:%S"
                ),
            )
            for log_file in log_files
        ),
    )


@handles_errors
def logs_view_command(
    lines: int = typer.Option(
        50, "--lines", "-n", min=1, help="Number of lines from the end of the log"
    ),
    file: str = typer.Option(
        None, "--file", help="Log file to view (defaults to the newest)"
    ),
) -> None:
    """Print the tail of a log file."""
    output = get_formatter()
    log_files = get_log_files()
    if file:
        target = get_log_directory() / file
    elif log_files:
        target = log_files[0]
    else:
        output.print_box("No log files found.", MessageType.WARNING, "No Logs")
        return
    content = target.read_text(encoding="utf-8").splitlines()
    output.print_box(
        f"Last {min(lines, len(content))} of {len(content)} lines from {target.name}",
        MessageType.INFO,
        "Log Content",
    )
    for line in content[-lines:]:
        output.console.print(line, markup=False, highlight=False)


@handles_errors
def logs_clear_command(
    yes: bool = typer.Option(False, "--yes", "-y", help="Skip confirmation prompt"),
) -> None:
    """Delete all log files."""
    output = get_formatter()
    log_files = get_log_files()
    if not log_files:
        output.print_box("No log files found to clear.", MessageType.INFO, "No Logs")
        return
    if not yes and not typer.confirm(f"Delete {len(log_files)} log file(s)?"):
        output.print_box("Log clearing cancelled.", MessageType.INFO)
        raise typer.Exit()
    for log_file in log_files:
        log_file.unlink(missing_ok=True)
    output.print_box(
        f"Deleted {len(log_files)} log file(s).", MessageType.SUCCESS, "Logs Cleared"
    )
