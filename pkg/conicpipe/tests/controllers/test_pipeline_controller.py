# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

# pyright: reportPrivateUsage=false
# pylint: disable=protected-access
import json
from pathlib import Path
from unittest.mock import MagicMock

import pytest

from conicpipe.controllers.pipeline_commands import Command, CommandResult, PipelineContext
from conicpipe.controllers.pipeline_controller import PipelineController
from conicpipe.core.config import GlobalConfig, PipelineConfig
from conicpipe.core.constants import RUN_MANIFEST_NAME
from conicpipe.core.errors import DatasetError
from conicpipe.core.types import Subcommand


def make_context(seed: int = 3, output_dir: Path | None = None) -> PipelineContext:
    return PipelineContext(config=PipelineConfig(global_config=GlobalConfig(seed=seed, output_dir=output_dir)))


def mock_command(output_location: Path, description: str = "Test command") -> MagicMock:
    command: MagicMock = MagicMock(spec=Command)
    command.get_description.return_value = description
    command.subcommand = Subcommand.COUNT
    command.parameters.return_value = {"instances": Path("t_instances.png"), "report": None}
    command.inputs.return_value = [Path("t_instances.png"), Path("t_classes.png")]
    command.output_location.return_value = output_location
    return command


class TestPipelineControllerBasics:
    """Test basic PipelineController functionality"""


    def test_initialization(self, mock_logger_provider: MagicMock) -> None:
        context = make_context()

        controller = PipelineController(context, mock_logger_provider, fail_fast=False, print_exceptions=False)

        assert controller.context is context
        assert controller._fail_fast is False
        assert controller.get_command_history() == []


class TestCommandExecution:
    """execute_command: results, failure policy, run manifests"""


    def test_execute_successful_command(self, tmp_path: Path, mock_logger_provider: MagicMock) -> None:
        context = make_context()
        controller = PipelineController(context, mock_logger_provider, fail_fast=False, print_exceptions=False)
        command = mock_command(tmp_path)
        command.execute.return_value = CommandResult(success=True, data="count (0, 0, 0, 0, 0, 0) total=0")

        result: CommandResult[str] = controller.execute_command(command)

        assert result.success is True
        assert result.data == "count (0, 0, 0, 0, 0, 0) total=0"
        assert controller.get_command_history() == ["Test command"]
        command.execute.assert_called_once_with(context)

    def test_success_writes_run_manifest(self, tmp_path: Path, mock_logger_provider: MagicMock) -> None:
        controller = PipelineController(make_context(seed=3), mock_logger_provider, False, False)
        command = mock_command(tmp_path)
        command.execute.return_value = CommandResult(success=True, data="ok")

        controller.execute_command(command)

        manifest = json.loads((tmp_path / RUN_MANIFEST_NAME).read_text(encoding="utf-8"))
        assert manifest["command"] == "count"
        assert manifest["seed"] == 3
        assert manifest["parameters"] == {"instances": "t_instances.png", "report": None}
        assert manifest["inputs"] == ["t_instances.png", "t_classes.png"]
        assert "numpy" in manifest["versions"]

    def test_output_dir_overrides_location(self, tmp_path: Path, mock_logger_provider: MagicMock) -> None:
        context = make_context(output_dir=tmp_path / "runs")
        controller = PipelineController(context, mock_logger_provider, fail_fast=False, print_exceptions=False)
        command = mock_command(tmp_path / "elsewhere")
        command.execute.return_value = CommandResult(success=True, data="ok")

        controller.execute_command(command)

        assert (tmp_path / "runs" / RUN_MANIFEST_NAME).is_file()
        assert not (tmp_path / "elsewhere").exists()

    def test_execute_failed_command(self, tmp_path: Path, mock_logger_provider: MagicMock) -> None:
        controller = PipelineController(make_context(), mock_logger_provider, fail_fast=False, print_exceptions=False)
        command = mock_command(tmp_path, "Failed command")
        command.execute.return_value = CommandResult(success=False, error="Test error")

        result: CommandResult[str] = controller.execute_command(command)

        assert result.success is False
        assert result.error == "Test error"
        assert controller.get_command_history() == []  # Failed commands not added to history
        assert not (tmp_path / RUN_MANIFEST_NAME).exists()

    def test_pipeline_error_without_fail_fast(self, tmp_path: Path, mock_logger_provider: MagicMock) -> None:
        controller = PipelineController(make_context(), mock_logger_provider, fail_fast=False, print_exceptions=False)
        command = mock_command(tmp_path, "Broken dataset")
        command.execute.side_effect = DatasetError("3 tile(s) have no prediction")

        result: CommandResult[str] = controller.execute_command(command)

        assert result.success is False
        assert result.error == "3 tile(s) have no prediction"
        assert controller.get_command_history() == []

    def test_crash_without_fail_fast(self, tmp_path: Path, mock_logger_provider: MagicMock) -> None:
        controller = PipelineController(make_context(), mock_logger_provider, fail_fast=False, print_exceptions=True)
        command = mock_command(tmp_path, "Crashing command")
        command.execute.side_effect = RuntimeError("Test exception")

        result: CommandResult[str] = controller.execute_command(command)

        assert result.success is False
        assert result.error is not None
        assert "Command crashed: Test exception" in result.error

    def test_fail_fast_reraises(self, tmp_path: Path, mock_logger_provider: MagicMock) -> None:
        controller = PipelineController(make_context(), mock_logger_provider, fail_fast=True, print_exceptions=False)
        command = mock_command(tmp_path)
        command.execute.side_effect = DatasetError("unreadable")

        with pytest.raises(DatasetError, match="unreadable"):
            controller.execute_command(command)

    def test_history_keeps_order(self, tmp_path: Path, mock_logger_provider: MagicMock) -> None:
        controller = PipelineController(make_context(), mock_logger_provider, fail_fast=False, print_exceptions=False)
        for name in ("first", "second", "third"):
            command = mock_command(tmp_path / name, name)
            command.execute.return_value = CommandResult(success=True, data=name)
            controller.execute_command(command)

        assert controller.get_command_history() == ["first", "second", "third"]
