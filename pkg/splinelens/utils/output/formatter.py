"""Rich console output shared by every command.

Status goes into bordered panels, result summaries into tables. Numbers in
tables are rounded for reading only; CSV files keep full precision.
"""

from collections.abc import Iterable, Sequence
from typing import Any, NamedTuple

import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .types import MessageType


class _Style(NamedTuple):
    title: str
    border: str
    color: str


_STYLES = {
    MessageType.INFO: _Style("Info", "dim", ""),
    MessageType.SUCCESS: _Style("Success", "green", "green"),
    MessageType.WARNING: _Style("Warning", "yellow", "yellow"),
    MessageType.ERROR: _Style("Error", "red", "red"),
    MessageType.HINT: _Style("Hint", "dim", "dim"),
}


def _cell(value: Any) -> str:
    if isinstance(value, float | np.floating):
        return f"{float(value):.6g}"
    if isinstance(value, bool | np.bool_):
        return "yes" if value else "no"
    return "" if value is None else str(value)


class OutputFormatter:
    """Writes panels, one-liners and tables to a rich console."""

    def __init__(self, console: Console | None = None) -> None:
        self.console = console or Console()

    def print_box(
        self,
        message: str,
        message_type: MessageType = MessageType.INFO,
        title: str | None = None,
    ) -> None:
        """Show ``message`` in a panel titled after its type unless ``title``."""
        style = _STYLES[message_type]
        panel = Panel(
            message,
            title=title or style.title,
            title_align="left",
            border_style=style.border,
            padding=(0, 1),
            expand=False,
        )
        self.console.print(panel)

    def print_simple(
        self, message: str, message_type: MessageType = MessageType.INFO
    ) -> None:
        color = _STYLES[message_type].color
        self.console.print(f"[{color}]{message}[/{color}]" if color else message)

    def print_error_box(
        self, message: str, hint: str | None = None, title: str | None = None
    ) -> None:
        self.print_box(message, MessageType.ERROR, title)
        if hint:
            self.print_simple(hint, MessageType.HINT)

    def print_table(
        self,
        title: str,
        columns: Sequence[str],
        rows: Iterable[Sequence[Any]],
    ) -> None:
        """Tabulate ``rows``; floats show 6 significant digits, bools yes/no."""
        table = Table(title=title)
        for index, column in enumerate(columns):
            table.add_column(column, style="cyan" if index == 0 else None)
        for row in rows:
            table.add_row(*map(_cell, row))
        self.console.print(table)

    def print_outputs(self, paths: Iterable[Any], title: str = "Outputs") -> None:
        """List the files a command wrote."""
        message = "\n".join(str(path) for path in paths) or "(nothing written)"
        self.print_box(message, MessageType.SUCCESS, title)


_formatter: OutputFormatter | None = None


def get_formatter(console: Console | None = None) -> OutputFormatter:
    """The process-wide formatter; ``console`` only matters on the first call."""
    global _formatter
    if _formatter is None:
        _formatter = OutputFormatter(console)
    return _formatter
