"""Command-line interface: ``evsched generate|solve|validate|oracle|export-mps|report``.

Exit codes: 0 success, 1 infeasible (or an invalid solution for
``validate``), 2 invalid input, 3 time limit, 4 internal error.
"""
import json
import logging
import sys
from typing import Optional, Sequence

import click
from pydantic import ValidationError

from evsched import configure_logging
from evsched.bnp import STATUS_INFEASIBLE, STATUS_OPTIMAL, STATUS_TIME_LIMIT, solve
from evsched.config import DOMINANCE_MODES, SolverConfig, default_time_limit
from evsched.errors import EvschedError, InvalidInstanceError
from evsched.instgen import FAMILIES, generate_family
from evsched.models.schedule import validate_fleet
from evsched.mps import export_compact_mip
from evsched.oracle import DEFAULT_GRID, dp_solve, lipschitz_tolerance
from evsched.report import write_report
from evsched.utils.io import load_instance, load_solution, save_instance, save_solution, save_stats

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_INVALID = 2
EXIT_TIME_LIMIT = 3
EXIT_INTERNAL = 4

STATUS_EXIT = {STATUS_OPTIMAL: EXIT_OK, STATUS_INFEASIBLE: EXIT_INFEASIBLE, STATUS_TIME_LIMIT: EXIT_TIME_LIMIT}


def _parse_overrides(values: Sequence[str]) -> dict:
    out = {}
    for item in values:
        key, sep, raw = item.partition('=')
        if not sep or not key:
            raise InvalidInstanceError(f"override {item!r} is not of the form key=value")
        try:
            out[key.strip()] = float(raw)
        except ValueError:
            raise InvalidInstanceError(f"override {key}: {raw!r} is not a number") from None
    return out


def _nu(value: Optional[str]) -> Optional[int]:
    if value is None or value == 'auto':
        return None
    try:
        return int(value)
    except ValueError:
        raise InvalidInstanceError(f"--nu expects 'auto' or an integer, got {value!r}") from None


@click.group()
@click.option('--log-level', default=None, help='Overrides EVCS_LOG.')
def cli(log_level):
    """Charge and service operation scheduling for electric vehicle fleets."""
    if log_level:
        configure_logging(log_level)


@cli.command()
@click.option('--family', type=click.Choice(sorted(FAMILIES) + ['casestudy']), default='small')
@click.option('--seed', type=int, default=0)
@click.option('--set', 'overrides', multiple=True, metavar='KEY=VALUE', help='Generator parameter override.')
@click.option('--prices', 'prices_csv', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Price CSV (timestamp,price) for the casestudy family.')
@click.option('--flexibility', type=float, default=None, help='Casestudy departure window in hours.')
@click.option('--capacity', type=int, default=None, help='Casestudy fast-charger capacity.')
@click.option('--price-mean', type=float, default=None, help='Casestudy mean energy price.')
@click.option('-o', '--output', type=click.Path(dir_okay=False), default=None)
def generate(family, seed, overrides, prices_csv, flexibility, capacity, price_mean, output):
    """Generate a seeded instance."""
    params = _parse_overrides(overrides)
    for key, value in (('flexibility', flexibility), ('capacity', capacity), ('price_mean', price_mean)):
        if value is not None:
            if family != 'casestudy':
                raise InvalidInstanceError(f"--{key.replace('_', '-')} only applies to the casestudy family")
            params[key] = value
    inst = generate_family(family, seed, params, prices_csv)
    if output:
        save_instance(inst, output)
        logger.info("instance %s written to %s", inst.name, output)
    else:
        click.echo(json.dumps(inst.to_dict(), indent=2))
    return EXIT_OK


@cli.command('solve')
@click.argument('instance', type=click.Path(exists=True, dir_okay=False))
@click.option('--time-limit', type=float, default=None)
@click.option('--gap', type=float, default=None)
@click.option('--nu', default=None, help="'auto' or a column count.")
@click.option('--no-heuristic', is_flag=True)
@click.option('--dominance', type=click.Choice(DOMINANCE_MODES), default=None)
@click.option('--threads', type=int, default=None)
@click.option('--no-intermediate', is_flag=True, help='Replacement-only pricing.')
@click.option('--trace', 'trace_path', type=click.Path(dir_okay=False), default=None,
              help='Write the pricing label trace as JSON lines.')
@click.option('-o', '--output', type=click.Path(dir_okay=False), default=None)
@click.option('--stats', 'stats_path', type=click.Path(dir_okay=False), default=None)
def solve_command(instance, time_limit, gap, nu, no_heuristic, dominance, threads, no_intermediate, trace_path,
                  output, stats_path):
    """Solve an instance with branch-and-price."""
    inst = load_instance(instance)
    config = SolverConfig.from_mapping(
        time_limit=time_limit if time_limit is not None else default_time_limit(), gap=gap, nu=_nu(nu),
        heuristic=False if no_heuristic else None, dominance=dominance, threads=threads,
        intermediate_charging=False if no_intermediate else None, trace_path=trace_path)
    result = solve(inst, config)
    solution = result.to_solution(inst)
    stats = result.stats.to_dict()
    if output:
        save_solution(solution, output)
    if stats_path:
        save_stats(stats, stats_path)
    click.echo(json.dumps({'status': result.status, 'objective': result.objective, 'bound': result.bound,
                           'gap': result.gap}))
    return STATUS_EXIT.get(result.status, EXIT_INTERNAL)


@cli.command()
@click.argument('instance', type=click.Path(exists=True, dir_okay=False))
@click.argument('solution', type=click.Path(exists=True, dir_okay=False))
def validate(instance, solution):
    """Check a solution against an instance."""
    inst = load_instance(instance)
    _, schedules = load_solution(solution, inst)
    report = validate_fleet(schedules, inst)
    for v in report.violations:
        click.echo(json.dumps(v.to_dict()))
    click.echo('ok' if report.ok else f"{len(report.violations)} violation(s)")
    return EXIT_OK if report.ok else EXIT_INFEASIBLE


@cli.command()
@click.argument('instance', type=click.Path(exists=True, dir_okay=False))
@click.option('--grid', type=int, default=DEFAULT_GRID, help='SoC grid points over the battery window.')
@click.option('-o', '--output', type=click.Path(dir_okay=False), default=None)
def oracle(instance, grid, output):
    """Solve a tiny instance exactly on a discretised SoC grid."""
    inst = load_instance(instance)
    result = dp_solve(inst, grid=grid)
    if output:
        save_solution(result.to_dict(inst), output)
    click.echo(json.dumps({'objective': result.objective, 'states': result.states,
                           'tolerance': lipschitz_tolerance(inst, result.delta_q)}))
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


@cli.command('export-mps')
@click.argument('instance', type=click.Path(exists=True, dir_okay=False))
@click.option('-o', '--output', type=click.Path(dir_okay=False), required=True)
def export_mps(instance, output):
    """Write the compact MIP of an instance in MPS format."""
    inst = load_instance(instance)
    counts = export_compact_mip(inst, output)
    click.echo(json.dumps(counts))
    return EXIT_OK


@cli.command()
@click.argument('directory', type=click.Path(exists=True, file_okay=False))
@click.option('-o', '--output', type=click.Path(dir_okay=False), required=True)
@click.option('--aggregate', 'aggregated', is_flag=True, help='One summary row instead of one row per run.')
def report(directory, output, aggregated):
    """Tabulate stats files of a directory into CSV."""
    write_report(directory, output, aggregated)
    return EXIT_OK


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        code = cli.main(args=args, prog_name='evsched', standalone_mode=False)
    except click.exceptions.Abort:
        click.echo('aborted', err=True)
        return EXIT_INTERNAL
    except click.ClickException as e:
        e.show()
        return EXIT_INVALID
    except (InvalidInstanceError, ValidationError, json.JSONDecodeError) as e:
        logger.error("invalid input: %s", e)
        click.echo(f"error: {e}", err=True)
        return EXIT_INVALID
    except EvschedError as e:
        logger.exception("solver error")
        click.echo(f"error: {e}", err=True)
        return EXIT_INTERNAL
    except Exception:
        logger.exception("unexpected error")
        return EXIT_INTERNAL
    return code if isinstance(code, int) else EXIT_OK
