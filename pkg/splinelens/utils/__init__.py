"""Utility modules: seeded random streams, ordered thread pools, CSV reports
and console output."""

from .output import MessageType, OutputFormatter, get_formatter
from .parallel import ordered_map
from .random import make_rng

__all__ = [
    "MessageType",
    "OutputFormatter",
    "get_formatter",
    "make_rng",
    "ordered_map",
]
