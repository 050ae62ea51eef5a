# retypelab/main.py - Command-line entry point
import argparse
import logging
import sys
from typing import List, Optional

from retypelab.commands import SUBCOMMANDS
from retypelab.commands.common import RunTracker, add_global_flags
from retypelab.core.config import load_pipeline_config, settings
from retypelab.core.errors import RetypelabError, ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose or settings.DEBUG else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="Infer function return types from 32-bit x86 disassembly",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    add_global_flags(parser)
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for module in SUBCOMMANDS:
        module.register(subparsers)
    for subparser in subparsers.choices.values():
        add_global_flags(subparser, suppress=True)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)

    try:
        overrides = {
            "seed": args.seed,
            "threads": args.threads,
            "timestamp": False if args.no_timestamp else None,
            "registry": False if args.no_registry else None,
        }
        overrides.update(args.overrides(args))
        config = load_pipeline_config(args.config, overrides)

        if getattr(args, "track", True):
            with RunTracker(args.command, config):
                args.handler(args, config)
        else:
            args.handler(args, config)
    except RetypelabError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"{args.command} failed: {e}")
        return ValidationError.exit_code
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly: {e}")
        return EXIT_UNEXPECTED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
