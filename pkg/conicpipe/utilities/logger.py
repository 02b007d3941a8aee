# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Logging for conicpipe.

Every module logs through a child of the `conicpipe` logger. Library code asks
for one with get_logger("<module>"); the CLI builds a LoggerProvider once,
which attaches the console (stderr) and optional file handlers to the root.
"""

import datetime
import logging
from pathlib import Path
from typing import Any, Final, cast

TRACE: Final[int] = 5  # per-instance detail: fusion provenance, per-tile decisions
DEBUG: Final[int] = logging.DEBUG
INFO: Final[int] = logging.INFO
WARNING: Final[int] = logging.WARNING
ERROR: Final[int] = logging.ERROR
CRITICAL: Final[int] = logging.CRITICAL

ROOT_LOGGER_NAME: Final[str] = "conicpipe"

logging.addLevelName(TRACE, "TRACE")

LOG_LEVEL_NAMES: Final[dict[str, int]] = {
    logging.getLevelName(level): level for level in (TRACE, DEBUG, INFO, WARNING, ERROR, CRITICAL)
}

CONSOLE_FORMAT: Final[str] = "%(asctime)s | %(levelname)-8s | %(message)s"
FILE_FORMAT: Final[str] = (
    "%(asctime)s.%(msecs)03d | %(levelname)-8s | %(threadName)s | %(name)s:%(lineno)d | %(message)s"
)
LOG_FILE_STAMP: Final[str] = "%Y%m%d_%H%M%S"


class PipelineLogger(logging.Logger):
    """logging.Logger with a trace() method for the TRACE level"""

    def trace(self, msg: object, *args: Any, **kwargs: Any) -> None:  # type: ignore[explicit-any]
        if self.isEnabledFor(TRACE):
            self._log(TRACE, msg, args, **kwargs)


# Must run before the first conicpipe logger is created
logging.setLoggerClass(PipelineLogger)


def get_logger(module_name: str) -> PipelineLogger:
    return cast(PipelineLogger, logging.getLogger(f"{ROOT_LOGGER_NAME}.{module_name}"))


def timestamped_log_path(prefix: str, now: datetime.datetime | None = None) -> Path:
    """run.log -> run_20250101_120000.log; a prefix without suffix gets .log"""
    path = Path(prefix)
    stamp: str = (now or datetime.datetime.now()).strftime(LOG_FILE_STAMP)
    return path.with_name(f"{path.stem}_{stamp}{path.suffix or '.log'}")


def configure_root_logger(
    console_level: int = INFO, log_file: Path | None = None, file_level: int = TRACE
) -> PipelineLogger:
    """
    Replace the handlers of the conicpipe root logger.

    The root does not propagate, so records reach only these handlers. Its
    level is the lowest of the handler levels.
    """
    root = cast(PipelineLogger, logging.getLogger(ROOT_LOGGER_NAME))
    root.handlers.clear()
    root.propagate = False

    console = logging.StreamHandler()
    console.setLevel(console_level)
    console.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt="%H:%M:%S"))
    root.addHandler(console)

    if log_file is None:
        root.setLevel(console_level)
        return root

    log_file.parent.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(log_file, encoding="utf-8")
    file_handler.setLevel(file_level)
    file_handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
    root.addHandler(file_handler)
    root.setLevel(min(console_level, file_level))
    return root


class LoggerProvider:
    """Configures the root logger once and hands out cached module loggers"""


    def __init__(
        self,
        log_level: int = INFO,
        log_file: str | None = None,
        file_log_level: int = TRACE,
    ) -> None:
        self._log_file: Path | None = timestamped_log_path(log_file) if log_file else None
        self._root_logger: PipelineLogger = configure_root_logger(log_level, self._log_file, file_log_level)
        self._loggers: dict[str, PipelineLogger] = {}


    @property
    def log_file(self) -> Path | None:
        return self._log_file

    def get_logger(self, module_name: str) -> PipelineLogger:
        logger = self._loggers.get(module_name)
        if logger is None:
            logger = self._loggers[module_name] = get_logger(module_name)
        return logger
