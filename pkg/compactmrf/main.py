import argparse
import logging
import sys
from typing import List, Optional

from compactmrf.cli.commands import COMMANDS
from compactmrf.config import get_settings

def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog=settings.app_name,
        description="Inferencia MAP en MRFs con priors lineales por tramos (relajaciones LP compactas)",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log en nivel DEBUG")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser

def configure_logging(verbose: bool = False) -> None:
    settings = get_settings()
    level = logging.DEBUG if verbose or settings.debug else getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    return args.func(args)

if __name__ == "__main__":
    sys.exit(main())
