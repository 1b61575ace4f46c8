"""Exit-code contract of the splinelens CLI.

Commands never call ``sys.exit`` themselves; errors bubble up to
:func:`handles_errors`, which shows them in a red panel, logs them and exits
with the matching code.
"""

import functools
import logging
from collections.abc import Callable
from typing import NoReturn, ParamSpec, TypeVar

import typer

from ..config import ConfigError
from ..core.batchnorm import DegenerateStatisticError
from ..core.geometry import SearchConvergenceError
from ..core.training import TrainingDivergedError
from ..logging import log_error
from ..utils.output import get_formatter

P = ParamSpec("P")
R = TypeVar("R")

EXIT_VERIFY_FAILED = 2
EXIT_INPUT_ERROR = 3
EXIT_NUMERICAL = 4
EXIT_INTERRUPTED = 130

NUMERICAL_ERRORS: tuple[type[BaseException], ...] = (
    DegenerateStatisticError,
    TrainingDivergedError,
    SearchConvergenceError,
)
# NetworkError, DatasetError, PartitionError, BatchSizeError and
# CheckSelectionError are all ValueErrors.
INPUT_ERRORS: tuple[type[BaseException], ...] = (
    ConfigError,
    ValueError,
    LookupError,
    OSError,
)

_TITLES = {
    EXIT_INPUT_ERROR: "Input Error",
    EXIT_NUMERICAL: "Numerical Degeneracy",
}
_HINTS = {
    EXIT_INPUT_ERROR: "Check --config, --set and the input files.",
    EXIT_NUMERICAL: "Try another seed or set compute.eps_bn above 0.",
}

logger = logging.getLogger("splinelens.cli")


def exit_code_for(error: BaseException) -> int | None:
    """Exit code of a known error, None for anything else."""
    if isinstance(error, NUMERICAL_ERRORS):
        return EXIT_NUMERICAL
    if isinstance(error, INPUT_ERRORS):
        return EXIT_INPUT_ERROR
    return None


def fail(error: BaseException) -> NoReturn:
    """Report ``error`` and exit with its code; unknown errors are re-raised."""
    code = exit_code_for(error)
    if code is None:
        raise error
    log_error(logger, _TITLES[code], error if isinstance(error, Exception) else None)
    get_formatter().print_error_box(
        f"{type(error).__name__}: {error}", _HINTS[code], _TITLES[code]
    )
    raise typer.Exit(code) from error


def handles_errors(command: Callable[P, R]) -> Callable[P, R]:
    """Wrap a command so known errors map to their exit codes."""

    @functools.wraps(command)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
        try:
            return command(*args, **kwargs)
        except typer.Exit:
            raise
        except Exception as e:
            fail(e)

    return wrapper
