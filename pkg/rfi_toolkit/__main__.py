#!/usr/bin/env python3
"""
Main entry point for the RFI toolkit command line.
"""
import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from rfi_toolkit import __version__
from rfi_toolkit.shared import setup_logging
from rfi_toolkit.shared.errors import ConfigError, DimensionMismatchError, RFIError

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


def parse_args(argv: Optional[List[str]] = None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="rfi-toolkit",
        description="Random function iterations: ensembles, distances and convergence diagnostics",
    )

    parser.add_argument('--version', action='store_true',
                        help='Show version information')

    parser.add_argument('--debug', action='store_true',
                        help='Log debug messages')

    parser.add_argument('--log-file', action='store_true',
                        help='Also log to ~/.rfi_toolkit/logs/run.log')

    subparsers = parser.add_subparsers(dest='command')

    run_parser = subparsers.add_parser('run', help='Run an experiment config or bundled example')
    run_parser.add_argument('config', help='Path to a TOML config or the name of a bundled example')
    run_parser.add_argument('--out', type=str, default=None,
                            help='Output directory (overrides the config)')
    run_parser.add_argument('--threads', type=int, default=None,
                            help='Worker threads for the particle map (overrides the config)')

    compare_parser = subparsers.add_parser('compare', help='Distances between two measure files')
    compare_parser.add_argument('first', help='Measure file (JSON or CSV)')
    compare_parser.add_argument('second', help='Measure file (JSON or CSV)')
    compare_parser.add_argument('--wasserstein', type=float, default=None, metavar='P',
                                help='Report W_P (default W_2 when no metric is chosen)')
    compare_parser.add_argument('--prokhorov', action='store_true',
                                help='Report the Prokhorov-Levy distance')

    subparsers.add_parser('list-examples', help='List the bundled example configs')

    return parser, parser.parse_args(argv)


def run_command(args) -> int:
    """Run one experiment and write its artifacts."""
    from rfi_toolkit.backend.experiments import ExperimentRunner, load_config

    try:
        config = load_config(args.config)
        if args.out is not None:
            config = config.model_copy(update={"output": config.output.model_copy(update={"directory": args.out})})
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads must be positive, got {args.threads}")
        runner = ExperimentRunner(config)
    except (ConfigError, ValidationError) as e:
        print(f"Config error: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        manifest, result = runner.run_to_directory(threads=args.threads)
    except Exception as e:
        logging.getLogger("rfi_toolkit").debug("Run failed", exc_info=True)
        print(f"Runtime error: {type(e).__name__}: {str(e)}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR

    print(f"Wrote {len(manifest.outputs)} file(s) to {config.output.directory} ({manifest.status})")
    if result.errors:
        for error in result.errors:
            print(f"Diagnostic error: {error}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR
    return EXIT_OK


def compare_command(args) -> int:
    """Print W_p and/or Prokhorov-Levy distances between two measure files as JSON."""
    from rfi_toolkit.backend.artifacts import load_measure
    from rfi_toolkit.backend.measures import prokhorov, wasserstein

    try:
        first = load_measure(args.first)
        second = load_measure(args.second)
        if first.dimension != second.dimension:
            raise DimensionMismatchError(
                f"{args.first} has dimension {first.dimension}, {args.second} has {second.dimension}"
            )
    except (ConfigError, DimensionMismatchError) as e:
        print(f"Input error: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    p = args.wasserstein
    if p is None and not args.prokhorov:
        p = 2.0
    report = {}
    try:
        if p is not None:
            distance = wasserstein(first, second, p)
            report["wasserstein"] = {"p": p, "value": distance.value, "method": distance.method.value}
        if args.prokhorov:
            distance = prokhorov(first, second)
            report["prokhorov"] = {"value": distance.value, "method": distance.method.value}
    except (RFIError, ValueError) as e:
        print(f"Runtime error: {str(e)}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def list_examples_command(args) -> int:
    from rfi_toolkit.backend.experiments import list_examples

    for name in list_examples():
        print(name)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    parser, args = parse_args(argv)

    if args.version:
        print(f"RFI Toolkit v{__version__}")
        return EXIT_OK

    setup_logging(log_level=logging.DEBUG if args.debug else logging.INFO, log_to_file=args.log_file)

    if args.command == 'run':
        return run_command(args)
    if args.command == 'compare':
        return compare_command(args)
    if args.command == 'list-examples':
        return list_examples_command(args)

    parser.print_help()
    return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
