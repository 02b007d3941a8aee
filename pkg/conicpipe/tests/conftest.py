# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

# /tests/conftest.py

import logging
from collections.abc import Iterator
from unittest.mock import MagicMock

import numpy as np
import pytest

from conicpipe.core.constants import THREADS_ENV_VAR
from conicpipe.utilities.logger import ROOT_LOGGER_NAME, LoggerProvider, PipelineLogger
from conicpipe.tests.test_utilities import LabelAssertions, LabelMapFactory


@pytest.fixture(autouse=True)
def reset_pipeline_logging(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    """CLI runs detach the root pipeline logger; reattach it so caplog sees records"""
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
    root = logging.getLogger(ROOT_LOGGER_NAME)
    yield
    root.handlers.clear()
    root.propagate = True
    root.setLevel(logging.NOTSET)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def label_factory(rng: np.random.Generator) -> LabelMapFactory:
    return LabelMapFactory(rng)


@pytest.fixture
def label_assertions() -> LabelAssertions:
    return LabelAssertions()


@pytest.fixture
def mock_logger_provider() -> MagicMock:
    provider = MagicMock(spec=LoggerProvider)
    mock_logger = MagicMock(spec=PipelineLogger)
    provider.get_logger.return_value = mock_logger
    return provider
