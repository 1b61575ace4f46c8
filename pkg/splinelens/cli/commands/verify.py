"""Verify command: the seeded verification battery."""

from pathlib import Path

import typer

from ...core.checks import CHECKS, VerifySettings, run_checks
from ...utils.output import MessageType, get_formatter
from ..error_handler import EXIT_VERIFY_FAILED, handles_errors
from ..runner import (
    ConfigFileOption,
    OutOption,
    SeedOption,
    SetOption,
    ThreadsOption,
    start_run,
)


@handles_errors
def verify_command(
    config: Path = ConfigFileOption,
    overrides: list[str] = SetOption,
    seed: int = SeedOption,
    threads: int = ThreadsOption,
    out: Path = OutOption,
    only: list[str] = typer.Option(
        None,
        "--only",
        help=f"Run only these checks (repeatable): {', '.join(CHECKS)}",
    ),
) -> None:
    """Run the verification battery; exits 2 when any check fails."""
    output = get_formatter()
    run = start_run("verify", config, overrides, seed, threads, out)
    settings = VerifySettings.from_mapping(
        run.experiment.section("verify"), seed=run.seed, threads=run.threads
    )
    results = run_checks(settings, only or None, run.out)

    output.print_table(
        "Verification",
        ("check", "passed", "instances", "summary"),
        ((r.name, r.passed, len(r.rows), r.summary) for r in results),
    )
    failed = [r.name for r in results if not r.passed]
    if failed:
        output.print_box(
            f"Failed: {', '.join(failed)}\nReports in {run.out}",
            MessageType.ERROR,
            "Verification Failed",
        )
        raise typer.Exit(EXIT_VERIFY_FAILED)
    output.print_box(
        f"{len(results)} check(s) passed\nReports in {run.out}",
        MessageType.SUCCESS,
        "Verification Passed",
    )
