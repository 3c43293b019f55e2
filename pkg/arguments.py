import common
import os
import argparse
import sys
import logging
from argcomplete.completers import ChoicesCompleter
import argcomplete
import difflib
from logger import logger, configure_logger
from typing import Optional
from typing import List

SUBCOMMANDS = {
    "phi": "Evaluate Phi and Phi' on run.p_grid",
    "malthus": "Malthusian exponent, Biggins threshold and derived constants",
    "assumptions": "Report which integrability assumptions hold",
    "stopping-line": "Simulate stopping lines at run.eta",
    "martingale": "<rho_eta, 1> along the coupled eta schedule",
    "additive": "Additive martingale Lambda_t(p) at run.t",
    "many-to-one": "Compare both sides of the many-to-one identity",
    "overshoot": "Sample first-passage overshoots of the tilted tagged fragment",
    "renewal": "KS distance of exp(-overshoot) to the limit measure along run.x_grid",
    "tagged": "Laplace transform of the tagged fragment against exp(-Phi^(p)(lambda) t)",
    "limit": "Pairings <rho, f> and the CDF of the limit measure",
    "slln": "Strong law experiment along coupled, refined stopping lines",
    "self-similar-times": "Freeze times after the self-similar time change of index run.alpha",
    "speed": "Speed of the largest fragment at run.t against Phi'(p_bar)",
}

CATALOG_MEASURES = ["dyadic", "binary_0.7", "dissipative", "uniform"]


def fuzzy_match(name: str, choices: List[str]) -> Optional[str]:
    matches = difflib.get_close_matches(name, choices, n=1, cutoff=0.5)
    return matches[0] if matches else None


def yaml_completer(prefix: str, parsed_args: str, **kwargs: str) -> List[str]:
    return [f for f in os.listdir('.') if (f.endswith(('.yaml', '.yml')) and f.startswith(prefix))]


def replica_range(value: str) -> List[int]:
    try:
        return common.str_to_list(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid replica range '{value}', expected e.g. 0-9,12") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Fragmentation stopping lines and their strong law of large numbers')
    parser.add_argument('config', metavar='config', type=str, help='Yaml file with the run config').completer = yaml_completer  # type: ignore
    parser.add_argument('-v', '--verbosity', choices=['debug', 'info', 'warning', 'error', 'critical'], default='info', help='Set the logging level (default: info)')
    parser.add_argument('--seed', dest='seed', type=int, default=None, help='Override run.master_seed')
    parser.add_argument('--replicas', dest='replicas', type=int, default=None, help='Override run.replicas')
    parser.add_argument('--out', dest='out', type=str, default=None, help='Override output.path ("-" for stdout)')
    parser.add_argument('--format', dest='format', choices=['csv', 'json'], default=None, help='Override output.format')
    parser.add_argument('--replica-range', dest='replica_range', type=replica_range, default=None, help='Range and/or list of replica ids to run, e.g. 0-9,12')
    parser.add_argument('--skip-replicas', dest='skip_replicas', type=replica_range, default=[], help='Range and/or list of replica ids to leave out')
    parser.add_argument('--measure', dest='measure', type=str, default=None, help=f'Use a catalog measure instead of the config one ({", ".join(CATALOG_MEASURES)})').completer = ChoicesCompleter(CATALOG_MEASURES)  # type: ignore

    subparsers = parser.add_subparsers(title='subcommands', dest='subcommand', required=True)
    for name, help_text in SUBCOMMANDS.items():
        subparsers.add_parser(name, help=help_text)
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    argcomplete.autocomplete(parser)
    args = parser.parse_args(argv)

    configure_logger(getattr(logging, args.verbosity.upper()))

    if args.measure is not None and args.measure not in CATALOG_MEASURES:
        suggested = fuzzy_match(args.measure, CATALOG_MEASURES)
        error_message = f"Invalid measure: '{args.measure}'"
        error_message += f" Did you mean '{suggested}'?" if suggested else ""
        logger.error(error_message)
        sys.exit(2)

    if not (args.config.endswith('.yaml') or args.config.endswith('.yml')):
        logger.error("Please specify a yaml configuration file")
        sys.exit(2)

    args.replica_filter = common.RangeList(args.replica_range)
    args.replica_filter.exclude(args.skip_replicas)
    return args
