"""Entry point for running splinelens as a module."""

import sys

import typer

from .cli.app import app
from .cli.error_handler import EXIT_INTERRUPTED


def main() -> None:
    try:
        app()
    except KeyboardInterrupt:
        typer.echo("\nInterrupted.", err=True)
        sys.exit(EXIT_INTERRUPTED)


if __name__ == "__main__":
    main()
