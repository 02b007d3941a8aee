# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Controller layer: runs commands against the pipeline context, converts
crashes into failed results and records a run manifest for every success.
"""

# mypy: allow-any-explicit

from pathlib import Path
from typing import Any, Final

from conicpipe.controllers.pipeline_commands import Command, CommandResult, PipelineContext
from conicpipe.core.errors import PipelineError
from conicpipe.utilities.logger import LoggerProvider, PipelineLogger
from conicpipe.utilities.run_manifest import build_run_manifest, write_run_manifest


class PipelineController:
    """
    Executes subcommands and owns the failure policy (--fail-fast,
    --print-exceptions)
    """


    def __init__(
        self, context: PipelineContext, logger_provider: LoggerProvider, fail_fast: bool, print_exceptions: bool
    ) -> None:
        self._fail_fast: bool = fail_fast
        self._print_exceptions: bool = print_exceptions
        self._logger: PipelineLogger = logger_provider.get_logger("PipelineController")

        self._context: PipelineContext = context
        self._command_history: list[Command[Any]] = []


    def execute_command(self, command: Command[Any]) -> CommandResult[Any]:
        """Execute a command; on success write its run manifest"""
        description: str = command.get_description()
        try:
            result: Final[CommandResult[Any]] = command.execute(self._context)
        except PipelineError as e:
            return self._failed(description, e, error=str(e))
        except Exception as e:
            return self._failed(description, e, error=f"Command crashed: {e}")

        if not result.success:
            self._logger.warning(f"{description} returned a failure: {result.error}")
            return result

        self._command_history.append(command)
        manifest_path: Path = self._record_run(command)
        self._logger.info(f"Done: {description}")
        self._logger.debug(f"Run manifest written to {manifest_path}")
        return result

    def _failed(self, description: str, e: Exception, error: str) -> CommandResult[Any]:
        """Log an exception per --print-exceptions, then re-raise it (--fail-fast) or wrap it"""
        kind: str = "failed" if isinstance(e, PipelineError) else "crashed"
        log = self._logger.exception if self._print_exceptions else self._logger.error
        log(f"{description} {kind}: {e}")
        if self._fail_fast:
            raise e
        return CommandResult(success=False, error=error)

    def _record_run(self, command: Command[Any]) -> Path:
        directory: Path = self._context.config.global_config.output_dir or command.output_location()
        manifest = build_run_manifest(
            command=command.subcommand.value,
            seed=self._context.seed,
            parameters=command.parameters(),
            inputs=command.inputs(),
        )
        return write_run_manifest(manifest, directory)

    @property
    def context(self) -> PipelineContext:
        return self._context

    def get_command_history(self) -> list[str]:
        """Descriptions of the commands that succeeded"""
        return [command.get_description() for command in self._command_history]
