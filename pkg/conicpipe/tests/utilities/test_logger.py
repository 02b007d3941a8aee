# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

import datetime
import logging
from pathlib import Path

import pytest

from conicpipe.utilities.logger import TRACE, LoggerProvider, PipelineLogger, get_logger, timestamped_log_path


class TestPipelineLogger:
    """TRACE level and the conicpipe logger hierarchy"""


    def test_module_loggers_live_under_root(self) -> None:
        logger = get_logger("ensemble")

        assert logger.name == "conicpipe.ensemble"
        assert isinstance(logger, PipelineLogger)

    def test_trace_level_registered(self) -> None:
        assert logging.getLevelName(TRACE) == "TRACE"

    def test_trace_records_emitted_when_enabled(self, caplog: pytest.LogCaptureFixture) -> None:
        logger = get_logger("trace_test")

        with caplog.at_level(TRACE, logger="conicpipe"):
            logger.trace("fine detail")

        assert any(record.levelno == TRACE and record.message == "fine detail" for record in caplog.records)

    def test_provider_caches_loggers(self) -> None:
        provider = LoggerProvider(log_level=logging.WARNING)

        assert provider.get_logger("Main") is provider.get_logger("Main")
        assert logging.getLogger("conicpipe").level == logging.WARNING


class TestLogFiles:
    """--log-file handling"""


    def test_timestamped_path(self) -> None:
        now = datetime.datetime(2025, 3, 4, 5, 6, 7)

        assert timestamped_log_path("logs/run.txt", now) == Path("logs/run_20250304_050607.txt")
        assert timestamped_log_path("logs/run", now) == Path("logs/run_20250304_050607.log")

    def test_file_receives_trace_records(self, tmp_path: Path) -> None:
        provider = LoggerProvider(log_level=logging.WARNING, log_file=str(tmp_path / "logs" / "run.log"))
        assert provider.log_file is not None

        provider.get_logger("ensemble").trace("fused 3 instances")
        for handler in logging.getLogger("conicpipe").handlers:
            handler.flush()

        text = provider.log_file.read_text(encoding="utf-8")
        assert "TRACE" in text
        assert "conicpipe.ensemble" in text
        assert "fused 3 instances" in text
