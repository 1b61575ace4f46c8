"""Command-line interface for splinelens."""

from .app import app

__all__ = ["app"]
