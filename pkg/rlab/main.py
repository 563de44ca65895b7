import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from rlab import __version__
from rlab.commands import analyze, check, parametrize, zoo
from rlab.utils.errors import ConfigError, RlabError
from rlab.utils.settings import log_level

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlab", description="Reifenberg laboratory")
    parser.add_argument("--version", action="version", version=f"rlab {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    analyze.register(subparsers)
    parametrize.register(subparsers)
    check.register(subparsers)
    zoo.register(subparsers)
    return parser


def _fail(error: dict, code: int) -> int:
    print(json.dumps(error, default=str), file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=log_level(), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags and 0 on --help / --version
        return int(e.code or 0)
    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e.error_count()} errors")
        return _fail({"error": "ValidationError", "errors": json.loads(e.json(include_url=False))},
                     ConfigError.exit_code)
    except RlabError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        return _fail(e.to_dict(), e.exit_code)


if __name__ == "__main__":
    sys.exit(main())
