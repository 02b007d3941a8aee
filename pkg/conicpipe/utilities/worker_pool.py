# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

import os
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

from conicpipe.core.constants import THREADS_ENV_VAR
from conicpipe.core.errors import ConfigurationError

T = TypeVar("T")
R = TypeVar("R")


def resolve_thread_count(requested: str | int | None) -> int:
    """
    Resolve the worker count.

    Priority order: environment variable > requested value > 1.
    'auto' means one worker per CPU.
    """
    env_threads: str | None = os.getenv(THREADS_ENV_VAR)
    if env_threads:
        try:
            parsed: int = int(env_threads)
        except ValueError as e:
            raise ConfigurationError(f"Invalid {THREADS_ENV_VAR}: {env_threads!r}") from e
        if parsed <= 0:
            raise ConfigurationError(f"{THREADS_ENV_VAR} must be positive, got {parsed}")
        return parsed

    if requested is None:
        return 1
    if isinstance(requested, str):
        if requested == "auto":
            return os.cpu_count() or 1
        try:
            requested = int(requested)
        except ValueError as e:
            raise ConfigurationError(f"threads must be a positive integer or 'auto', got {requested!r}") from e
    if requested <= 0:
        raise ConfigurationError(f"threads must be positive, got {requested}")
    return requested


def map_ordered(func: Callable[[T], R], items: Iterable[T], threads: int) -> list[R]:
    """
    Apply func to every item, returning results in input order.

    Results never depend on the worker count; the first exception raised by
    any item propagates after the pool shuts down.
    """
    work: list[T] = list(items)
    if threads <= 1 or len(work) <= 1:
        return [func(item) for item in work]

    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="conicpipe-worker") as executor:
        return list(executor.map(func, work))
