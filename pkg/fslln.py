# PYTHON_ARGCOMPLETE_OK
import sys
import argparse
import dislocation
from arguments import parse_args
from logger import logger
from replicaPool import ReplicaPool
from runConfig import ConfigParseError, ConfigValidationError, RunConfig, load_config
from subcommandRunner import EXIT_CONFIG_ERROR, dispatch


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> None:
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigValidationError("--seed", f"must be a 64-bit unsigned integer, got {args.seed}")
        cfg.run.master_seed = args.seed
    if args.replicas is not None:
        if args.replicas < 1:
            raise ConfigValidationError("--replicas", f"must be at least 1, got {args.replicas}")
        cfg.run.replicas = args.replicas
    if args.out is not None:
        cfg.output.path = args.out
    if args.format is not None:
        cfg.output.format = args.format


def main() -> None:
    args = parse_args()

    try:
        cfg = load_config(args.config)
        apply_overrides(cfg, args)
        pool = ReplicaPool()
    except (ConfigParseError, ConfigValidationError, ValueError) as e:
        logger.error(f"invalid configuration: {e}")
        sys.exit(EXIT_CONFIG_ERROR)

    measure = dislocation.catalog()[args.measure] if args.measure is not None else None
    replica_ids = args.replica_filter.replica_ids(cfg.run.replicas)
    sys.exit(dispatch(args.subcommand, cfg, replica_ids, measure, pool))


if __name__ == "__main__":
    main()
