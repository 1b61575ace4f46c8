"""Console output formatting for splinelens."""

from .formatter import OutputFormatter, get_formatter
from .types import MessageType

__all__ = ["MessageType", "OutputFormatter", "get_formatter"]
