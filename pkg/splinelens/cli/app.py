"""Main CLI application setup for splinelens.

This module defines the Typer application and registers the command groups.
Command implementations live in the commands/ package.
"""

import typer

from .. import __version__
from .commands import (
    concentration_command,
    config_reset_command,
    config_set_command,
    config_show_command,
    jitter_command,
    logs_clear_command,
    logs_show_command,
    logs_view_command,
    partition_command,
    stats_command,
    train_command,
    verify_command,
)

app = typer.Typer(
    name="splinelens",
    help="Spline-partition geometry of deep networks with batch normalization",
    add_completion=False,
    no_args_is_help=True,
)

logs_app = typer.Typer(
    name="logs", help="Manage splinelens logs", add_completion=False
)
config_app = typer.Typer(
    name="config", help="Manage splinelens settings", add_completion=False
)

app.add_typer(logs_app, name="logs")
app.add_typer(config_app, name="config")


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        typer.echo(f"splinelens version {__version__}")
        raise typer.Exit()


@app.callback()
def main(
    version: bool | None = typer.Option(
        None,
        "--version",
        "-v",
        callback=version_callback,
        is_eager=True,
        help="Show version and exit",
    ),
) -> None:
    """Trace, measure and verify the input-space partitions of deep networks.

    Every experiment command writes its outputs and a config.resolved file
    into one directory; passing config.resolved back via --config reproduces
    the run.

    Examples:
        splinelens partition --seed 3
        splinelens verify --only tls-minimizer
        splinelens jitter --set jitter.draws=50 --threads 4

    Exit codes: 0 success, 2 verification failure, 3 input error,
    4 numerical degeneracy.
    """


app.command("partition")(partition_command)
app.command("verify")(verify_command)
app.command("concentration")(concentration_command)
app.command("jitter")(jitter_command)
app.command("train")(train_command)
app.command("stats")(stats_command)

logs_app.command("show")(logs_show_command)
logs_app.command("view")(logs_view_command)
logs_app.command("clear")(logs_clear_command)

config_app.command("show")(config_show_command)
config_app.command("set")(config_set_command)
config_app.command("reset")(config_reset_command)
