"""
Main entry point for the KE toolkit.

Parses the command line, resolves the run configuration, configures
logging and dispatches to the command handlers. Every toolkit error is
turned into a JSON error record on stderr and its exit code.
"""

import json
import logging
import sys
from typing import List, Optional

import colorama
import requests

from src.cli import COMMANDS, build_parser, config_overrides
from src.errors import KEToolkitError
from src.settings_manager import SettingsManager

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(level: str = "WARNING", log_file: Optional[str] = None):
    """
    Configure the root logger once per process.

    Args:
        level: Logging level name
        log_file: Optional file receiving the same records
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    formatter = logging.Formatter(LOG_FORMAT)
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(formatter)
    root.addHandler(console)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

    root.setLevel(getattr(logging, level.upper(), logging.WARNING))


def report_error(error: KEToolkitError) -> int:
    print(json.dumps(error.to_record()), file=sys.stderr)
    return error.exit_code


def main(argv: Optional[List[str]] = None, session: Optional[requests.Session] = None) -> int:
    """
    Run one CLI command.

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])
        session: HTTP session handed to the OpenAlex client

    Returns:
        int: Process exit code
    """
    colorama.init()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = SettingsManager(getattr(args, "config_dir", None))
        config = settings.resolve(config_overrides(args))
        setup_logging(config.log_level, config.log_file)
        return COMMANDS[args.command](args, config, session)
    except KEToolkitError as e:
        logging.getLogger(__name__).debug("Command failed", exc_info=True)
        return report_error(e)
    except KeyboardInterrupt:
        print("Interrupted", file=sys.stderr)
        return 130


def run():
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
