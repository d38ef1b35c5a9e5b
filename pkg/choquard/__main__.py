#! /usr/bin/env python3
import logging
from pathlib import Path
from typing import Optional

import typer

from choquard._version import __version__
from choquard.definitions import (
    EXIT_CONFIG_ERROR,
    EXIT_HYPOTHESIS,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    RUN_MODES,
)
from choquard.run_conf import load_run_config
from choquard.runner import reproduce as reproduce_run
from choquard.runner import run as run_config
from choquard.utils import (
    BoxTooSmallError,
    ConfigError,
    ConvergenceError,
    DomainError,
    HypothesisError,
    NonlinearityError,
    PathError,
    QuadratureError,
    log,
)

cli = typer.Typer(help="Fractional Choquard toolkit Command Line Interface")

LOG_FORMAT = "%(asctime)s %(levelname)s: [%(module)s:%(funcName)s] %(message)s"

MODE_HELP = {
    "solve-fixed-mu": "ground state at mu = e^lambda",
    "solve-normalized": "ground state with prescribed mass, mu recovered",
    "excited": "heuristic excited states from the minimax paths",
    "path-audit": "admissibility of a path, theta*, a_n upper bound, interaction floor",
    "riesz-kernel": "table of the radial Riesz kernel and its singular regimes",
    "asymptotics": "a_n upper bound over a lambda grid",
    "pohozaev-audit": "ground state and kernel audit of the Pohozaev identity",
    "check-growth": "growth conditions of the nonlinearity",
}


def setup_logging(verbose: bool) -> None:
    if not log.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        log.addHandler(handler)
    log.setLevel(logging.DEBUG if verbose else logging.INFO)


RUN_ERRORS = (ConfigError, DomainError, NonlinearityError, PathError, ConvergenceError, BoxTooSmallError,
              QuadratureError, HypothesisError)


def exit_code(error: Exception) -> int:
    if isinstance(error, (ConvergenceError, BoxTooSmallError, QuadratureError)):
        return EXIT_NOT_CONVERGED
    if isinstance(error, HypothesisError):
        return EXIT_HYPOTHESIS
    return EXIT_CONFIG_ERROR


@cli.command(help='Get choquard library version')
def version():
    print(__version__)


@cli.command(help='List the run modes')
def modes():
    for mode in RUN_MODES:
        print(f"{mode:18} {MODE_HELP[mode]}")


@cli.command(help='Run the mode of a YAML run configuration')
def run(
    config: Path,
    output_dir: Optional[Path] = typer.Option(
        None, "--output-dir", "-o",
        help="Directory of the output tree, overrides output_dir of the configuration",
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log solver iterations"),
):
    setup_logging(verbose)
    try:
        conf = load_run_config(config)
        if output_dir is not None:
            conf.output_dir = str(output_dir)
        result = run_config(conf)
    except RUN_ERRORS as e:
        print(f"❌ {type(e).__name__}: {e}")
        raise typer.Exit(code=exit_code(e))
    print(f"✅ {result.mode} written to \033[1m{result.directory}\033[0m")
    if result.exit_code != EXIT_OK:
        raise typer.Exit(code=result.exit_code)


@cli.command(help='Re-run the experiment recorded in a manifest and compare its files')
def reproduce(
    manifest: Path,
    output_dir: Optional[Path] = typer.Option(
        None, "--output-dir", "-o",
        help="Write the re-run here instead of the recorded output directory",
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log solver iterations"),
):
    setup_logging(verbose)
    try:
        outcome = reproduce_run(manifest, output_dir)
    except RUN_ERRORS as e:
        print(f"❌ {type(e).__name__}: {e}")
        raise typer.Exit(code=exit_code(e))
    if outcome.byte_identical:
        print(f"✅ All files byte-identical in \033[1m{outcome.result.directory}\033[0m")
    else:
        differing = [name for name, same in outcome.identical.items() if not same]
        print(f"⚠️  Files differ from the recorded run: {', '.join(differing)}")
    if outcome.result.exit_code != EXIT_OK:
        raise typer.Exit(code=outcome.result.exit_code)


if __name__ == "__main__":
    cli()
