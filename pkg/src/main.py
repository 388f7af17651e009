# region -----External Imports-----
import logging
import sys
from typing import List, Optional

import click
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from typing_extensions import Annotated
# endregion

# region -----Internal Imports-----
from config import LOG_LEVEL
from . import __version__
from .exceptions import (
    DivergenceError,
    ErgodicityError,
    NumericalError,
    PositiveDefinitenessError,
    RankDeficiencyError,
)
from .experiments.commands import register_commands
# endregion

# region -----Supporting Variables-----
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
EXIT_DIVERGED = 3

NUMERICAL_ERRORS = (NumericalError, RankDeficiencyError, PositiveDefinitenessError, ErgodicityError)

stderr = Console(stderr=True)
# endregion

app = typer.Typer(
    name="per-etd",
    help="Off-policy evaluation with periodically restarted emphatic TD.",
    add_completion=False,
    no_args_is_help=True,
    pretty_exceptions_enable=False,
)

register_commands(app)


def setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=stderr, show_path=False)],
        force=True,
    )


def _print_version(value: bool) -> None:
    if value:
        typer.echo(__version__)
        raise typer.Exit()


@app.callback()
def main(
        log_level: Annotated[str, typer.Option("--log-level", help="DEBUG, INFO, WARNING or ERROR.")] = LOG_LEVEL,
        version: Annotated[Optional[bool], typer.Option(
            "--version", callback=_print_version, is_eager=True, help="Print the version and exit.")] = None,
):
    setup_logging(log_level)


def parse_and_dispatch(argv: List[str]) -> int:
    command = typer.main.get_command(app)
    try:
        result = command.main(args=list(argv), prog_name="per-etd", standalone_mode=False)
    except click.UsageError as e:
        stderr.print(e.ctx.get_usage() if e.ctx is not None else "", markup=False, highlight=False)
        stderr.print(f"Error: {e.format_message()}", markup=False, highlight=False)
        return EXIT_INVALID
    except click.ClickException as e:
        stderr.print(f"Error: {e.format_message()}", markup=False, highlight=False)
        return EXIT_INVALID
    except click.Abort:
        return EXIT_INVALID
    except DivergenceError as e:
        stderr.print(f"Diverged: {e}", markup=False, highlight=False)
        return EXIT_DIVERGED
    except NUMERICAL_ERRORS as e:
        stderr.print(f"Numerical error: {e}", markup=False, highlight=False)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError, OSError) as e:
        stderr.print(f"Invalid input: {e}", markup=False, highlight=False)
        return EXIT_INVALID
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(parse_and_dispatch(sys.argv[1:]))
