import json
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Optional

import click

from wavelab._logging import LogLevel, logger
from wavelab.exceptions import ExitCode, WaveLabError, exit_code_for
from wavelab.exponents import strichartz_admissible, verdict
from wavelab.lab import EXPERIMENTS, ExperimentConfig, run

SHORT_HELP = {
    "simulate": "Evolve one solution and audit its energy",
    "params": "Validate (d, p, a) and print the derived constants",
    "flux-check": "Energy flux through truncated light cones",
    "morawetz-check": "Morawetz and retarded-energy inequalities",
    "hardy-check": "Local Hardy form on random and extremal fields",
    "radiation": "Radiation fields along characteristics",
    "scatter": "Exterior and band scattering distances",
    "linear-scatter": "Scattering of the linear inverse-square flow",
    "decay-sweep": "Tail decay and integral estimates",
    "converge": "Observed order of accuracy under grid refinement",
}


def verbosity_option(func: Callable) -> Callable:
    def set_level(ctx, param, value):
        logger.set_level(value)
        return value

    return click.option(
        "-v",
        "--verbosity",
        type=click.Choice([level.name for level in LogLevel], case_sensitive=False),
        default=LogLevel.INFO.name,
        expose_value=False,
        is_eager=True,
        callback=set_level,
        help="Log level.",
    )(func)


def _fail(err: BaseException):
    logger.error(str(err))
    sys.exit(int(exit_code_for(err)))


@click.group
def cli():
    """`wavelab` command group"""


def _experiment_command(name: str) -> click.Command:
    @cli.command(name=name, short_help=SHORT_HELP.get(name))
    @click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        required=True,
        help="JSON experiment configuration.",
    )
    @click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None)
    @click.option("--assert", "assert_checks", is_flag=True, help="Exit 4 if any check fails.")
    @verbosity_option
    def command(config_path: Path, out: Optional[Path], assert_checks: bool):
        try:
            config = ExperimentConfig.from_file(config_path)
            if config.experiment != name:
                config = config.model_copy(update={"experiment": name})

            manifest = run(config, out=out, assert_checks=assert_checks)
        except WaveLabError as err:
            _fail(err)

        click.echo(manifest.model_dump_json(indent=2))

    command.__doc__ = f"{SHORT_HELP.get(name, name)}."
    return command


for _name in EXPERIMENTS:
    if _name != "params":
        _experiment_command(_name)


@cli.command(short_help=SHORT_HELP["params"])
@click.option("--d", "d", type=int, required=True)
@click.option("--p", "p", type=float, required=True)
@click.option("--a", "a", type=float, required=True)
@click.option(
    "--strichartz",
    type=(float, float, float),
    multiple=True,
    help="A (q, r, gamma) triple to classify. Repeatable.",
)
@click.option("--pedantic", is_flag=True, help="Warn about near-endpoint triples.")
@verbosity_option
def params(d: int, p: float, a: float, strichartz, pedantic: bool):
    """
    Validate a parameter triple and print the derived constants as JSON
    """
    result = verdict(d, p, a)
    if result["valid"] and strichartz:
        result["strichartz"] = [
            strichartz_admissible(d, q, r, gamma, a, pedantic=pedantic).model_dump()
            for q, r, gamma in strichartz
        ]

    click.echo(json.dumps(result, sort_keys=True, indent=2))
    if not result["valid"]:
        sys.exit(int(ExitCode.CONFIG_ERROR))
