"""
Main CLI entry point.

    python main.py <command> [--config run.json] [--flag value ...]

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from app.commands import cli_router
from app.commands.router import add_config_arguments
from app.core.config import settings
from app.core.exceptions import LaneEmdenException

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override it")
    common.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")

    parser = argparse.ArgumentParser(prog=settings.app_name, description="Liquid Lane-Emden star laboratory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in cli_router.commands:
        sub = subparsers.add_parser(command.name, help=command.help, parents=[common])
        add_config_arguments(sub, command.config)
    return parser


def configure_logging(level: Optional[str] = None):
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format=settings.log_format,
        force=True,
    )


def _format_validation_error(exc: ValidationError) -> str:
    messages = []
    for error in exc.errors():
        field = " -> ".join(str(x) for x in error["loc"]) or "config"
        messages.append(f"{field}: {error['msg']}")
    return "; ".join(messages)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = cli_router.get(args.pop("command"))
    config_path = args.pop("config", None)
    configure_logging(args.pop("log_level", None))

    data = {}
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"❌ Cannot read config {config_path}: {e}")
            return EXIT_CONFIG
        if not isinstance(data, dict):
            logger.error(f"❌ Config {config_path} must hold a JSON object")
            return EXIT_CONFIG
    data.update(args)

    try:
        config = command.config(**data)
    except ValidationError as e:
        logger.error(f"❌ Invalid configuration for {command.name}: {_format_validation_error(e)}")
        return EXIT_CONFIG

    try:
        command.handler(config)
    except LaneEmdenException as e:
        logger.error(f"❌ {command.name} failed: {e.detail}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"❌ {command.name} rejected its input: {_format_validation_error(e)}")
        return EXIT_CONFIG
    except Exception as e:
        # Log the full traceback; anything unexpected counts as a numerical failure
        logger.error(f"❌ {command.name} crashed: {e}", exc_info=True)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
