# invfilter/main.py
import argparse
import logging
import sys
from typing import Optional, Sequence

from invfilter.cli.commands import check_equivalence, run, validate
from invfilter.utils.config import settings

logger = logging.getLogger(__name__)

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def configure_logging(level: Optional[str] = None):
    logging.basicConfig(
        level=LOG_LEVELS[level or settings.LOG],
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invfilter",
        description="Barrier-function safety filters and prioritized bound controllers",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register all commands
    run.register(subparsers)
    check_equivalence.register(subparsers)
    validate.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()
    try:
        return args.handler(args)
    except Exception:
        logger.error(f"invfilter {args.command} failed unexpectedly", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
