"""
Main entry point for the mmforge CLI
"""
import argparse
import logging
import sys
from typing import List, Optional

from ..config import EXIT_CODES, LOG_LEVEL
from ..errors import ConfigInvalid, MmforgeError, OutputRootUnwritable, UsageError
from .commands import FLAGS, get_commands

logger = logging.getLogger(__name__)

# Configure logging; stdout carries command output
logging.basicConfig(
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
    handlers=[logging.StreamHandler(sys.stderr)],
)

USAGE_ERRORS = (UsageError, ConfigInvalid, OutputRootUnwritable, FileNotFoundError)


def build_parser() -> argparse.ArgumentParser:
    """Parser for every subcommand, built from the shared flag table"""
    parser = argparse.ArgumentParser(
        prog="mmforge",
        description="Synthetic multimodal video dataset pipeline and evaluation harness",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, command in get_commands().items():
        sub = subparsers.add_parser(name, help=command.help, description=command.help)
        for positional, options in command.positionals:
            sub.add_argument(positional, **options)
        for flag in command.flags:
            sub.add_argument(flag, **FLAGS[flag])
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, run the subcommand and return its exit status"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags and 0 on --help
        return int(e.code or 0)

    if args.log_level:
        logging.getLogger().setLevel(args.log_level)

    handler = get_commands()[args.command].handler
    try:
        return handler(args)
    except USAGE_ERRORS as e:
        logger.error(f"{args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CODES["usage_error"]
    except MmforgeError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CODES["partial_failure"]


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
