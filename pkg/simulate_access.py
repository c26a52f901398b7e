#!/usr/bin/env python3

import argparse
import logging
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from config import ConfigError
from presets import PRESET_NAMES
from runner import (
    EXIT_CONFIG_ERROR, EXIT_OK, EXIT_RUNTIME_ERROR, build_config, cli_overrides, load_scenario_data, run, run_sweep
)
from tokenomics import optimal_allot_count

logging.basicConfig(
    level=logging.INFO,
    format='%(message)s'
)
logger = logging.getLogger(__name__)


def add_scenario_arguments(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument(
        '--scenario',
        choices=PRESET_NAMES,
        help='Shipped preset to run'
    )
    source.add_argument(
        '--config',
        help='Path to a JSON scenario file'
    )

    parser.add_argument(
        '--seed',
        type=int,
        default=None,
        help='Random seed (default: the scenario seed, 42 for every preset)'
    )

    parser.add_argument(
        '--duration',
        type=float,
        default=None,
        help='Simulated seconds, overriding the scenario duration'
    )

    parser.add_argument(
        '--override',
        action='append',
        default=[],
        metavar='KEY=VALUE',
        help='Dotted-path config override, e.g. scheduler.capacity=300 (repeatable)'
    )

    parser.add_argument(
        '-o', '--out',
        default=None,
        help='Output directory (default: results/<scenario>)'
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Simulate credit-based, fee-less write access to a DAG ledger',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python simulate_access.py run --scenario single-node-greedy --seed 1

  python simulate_access.py run --scenario single-node-mixed \\
    --duration 600 \\
    --override scheduler.capacity=300 \\
    --out results/mixed-300

  python simulate_access.py run --config my_scenario.json -o results/custom

  python simulate_access.py sweep --scenario multi-node-greedy-opp \\
    --param network.delay_hi=0.15,0.3,0.6 --jobs 3

  python simulate_access.py allot --tokens 100 --hold-time 10 --cost 5 --gamma 1
        """
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='Log per-event detail')
    commands = parser.add_subparsers(dest='command', required=True)

    run_parser = commands.add_parser('run', help='Run one scenario')
    add_scenario_arguments(run_parser)

    sweep_parser = commands.add_parser('sweep', help='Run one scenario per value of a config key')
    add_scenario_arguments(sweep_parser)
    sweep_parser.add_argument(
        '--param',
        required=True,
        metavar='KEY=V1,V2,...',
        help='Dotted config key and the comma-separated values to sweep'
    )
    sweep_parser.add_argument(
        '--jobs',
        type=int,
        default=1,
        help='Parallel worker processes (default: 1)'
    )

    allot_parser = commands.add_parser('allot', help='Best number of credit allotments under concave generation')
    allot_parser.add_argument('--tokens', type=float, required=True, help='Tokens held')
    allot_parser.add_argument('--hold-time', type=float, required=True, help='Holding period in seconds')
    allot_parser.add_argument('--cost', type=float, required=True, help='Credits consumed per allotment')
    allot_parser.add_argument('--gamma', type=float, required=True, help='Saturation rate of generation (1/s)')
    allot_parser.add_argument('--n-max', type=int, default=100, help='Largest allotment count to try (default: 100)')

    commands.add_parser('presets', help='List shipped scenario presets')
    return parser


def default_out_dir(args: argparse.Namespace) -> str:
    if args.out:
        return args.out
    name = args.scenario or os.path.splitext(os.path.basename(args.config))[0]
    return os.path.join('results', name)


def command_run(args: argparse.Namespace) -> int:
    data = load_scenario_data(args.scenario, args.config)
    config, applied = build_config(data, args.seed, args.duration, args.override)
    out_dir = default_out_dir(args)
    status = run(config, out_dir, applied)
    if status == EXIT_OK:
        logger.info(f"Results written to {out_dir}")
    return status


def command_sweep(args: argparse.Namespace) -> int:
    param, sep, raw_values = args.param.partition('=')
    values = [value for value in raw_values.split(',') if value]
    if not sep or not param or not values:
        raise ConfigError([f"<cli>.param: expected KEY=V1,V2,..., got {args.param!r}"])

    data = load_scenario_data(args.scenario, args.config)
    overrides = cli_overrides(args.seed, args.duration, args.override)
    return run_sweep(data, param, values, default_out_dir(args), args.jobs, overrides)


def command_allot(args: argparse.Namespace) -> int:
    best_n, balance = optimal_allot_count(args.tokens, args.hold_time, args.cost, args.gamma, args.n_max)
    logger.info(f"Best allotment count: {best_n}")
    logger.info(f"Final balance: {balance:.6f} credits")
    return EXIT_OK


def command_presets(args: argparse.Namespace) -> int:
    for name in PRESET_NAMES:
        logger.info(name)
    return EXIT_OK


COMMANDS = {
    'run': command_run,
    'sweep': command_sweep,
    'allot': command_allot,
    'presets': command_presets,
}


def main() -> None:
    args = build_parser().parse_args()
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        status = COMMANDS[args.command](args)
    except ValueError as e:
        logger.error(f"Error: {e}")
        sys.exit(EXIT_CONFIG_ERROR)
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        sys.exit(EXIT_RUNTIME_ERROR)
    sys.exit(status)


if __name__ == '__main__':
    main()
