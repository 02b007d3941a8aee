# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
conicpipe - Main entry point

Exit codes:
- 0: success
- 1: data error (unreadable inputs, invalid maps, estimation failures)
- 2: usage error (unknown subcommand, bad flag values)
"""

import sys
from collections.abc import Sequence
from typing import NoReturn

from conicpipe.controllers.pipeline_commands import PipelineContext
from conicpipe.controllers.pipeline_controller import PipelineController
from conicpipe.core.constants import EXIT_DATA_ERROR, EXIT_OK, EXIT_USAGE_ERROR
from conicpipe.utilities.cli_args import PipelineArgs, parse_args
from conicpipe.utilities.logger import LoggerProvider, PipelineLogger


def _exit_code(e: SystemExit) -> int:
    if e.code is None:
        return EXIT_OK
    if isinstance(e.code, int):
        return e.code
    return EXIT_USAGE_ERROR


def run(argv: Sequence[str] | None = None) -> int:
    """Parse argv, run one subcommand and return its exit code"""
    try:
        args: PipelineArgs = parse_args(argv)
    except SystemExit as e:
        return _exit_code(e)

    logger_provider = LoggerProvider(
        log_level=args.log_level, log_file=args.log_file, file_log_level=args.file_log_level
    )
    logger: PipelineLogger = logger_provider.get_logger("Main")
    logger.debug(f"Running {args.subcommand.value} with seed {args.seed} on {args.threads} thread(s)")

    controller = PipelineController(
        context=PipelineContext(config=args.config, threads=args.threads),
        logger_provider=logger_provider,
        fail_fast=args.fail_fast,
        print_exceptions=args.print_exceptions,
    )
    result = controller.execute_command(args.command)

    if not result.success:
        print(f"conicpipe {args.subcommand.value}: {result.error}", file=sys.stderr)
        return EXIT_DATA_ERROR

    print(result.data)
    return EXIT_OK


def main() -> NoReturn:
    sys.exit(run())


if __name__ == "__main__":
    main()
