"""Kinds of console message."""

from enum import StrEnum


class MessageType(StrEnum):
    """Selects the panel title and colors."""

    INFO = "info"
    SUCCESS = "success"
    WARNING = "warning"
    ERROR = "error"
    HINT = "hint"
