# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Run manifest: what was run, on which inputs, with which parameters and
library versions. It holds no timestamps and no worker count so that two
identical invocations write identical bytes.
"""

# mypy: allow-any-explicit

from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import PIL
import pydantic
import scipy
from pydantic import BaseModel, ConfigDict

from conicpipe import __version__
from conicpipe.core.constants import RUN_MANIFEST_NAME
from conicpipe.utilities.atomic_io import atomic_write_text


class RunManifest(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    command: str
    seed: int
    parameters: dict[str, Any]
    inputs: list[str]
    versions: dict[str, str]


def library_versions() -> dict[str, str]:
    return {
        "conicpipe": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "Pillow": PIL.__version__,
        "pydantic": pydantic.VERSION,
    }


def to_json_value(value: object) -> Any:
    """Paths, enums, tuples and nested containers as plain JSON values"""
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_json_value(v) for v in value]
    return value


def build_run_manifest(command: str, seed: int, parameters: dict[str, object], inputs: list[Path]) -> RunManifest:
    return RunManifest(
        command=command,
        seed=seed,
        parameters={key: to_json_value(value) for key, value in sorted(parameters.items())},
        inputs=[str(path) for path in inputs],
        versions=library_versions(),
    )


def write_run_manifest(manifest: RunManifest, directory: Path) -> Path:
    path = Path(directory) / RUN_MANIFEST_NAME
    atomic_write_text(path, manifest.model_dump_json(indent=2) + "\n")
    return path
