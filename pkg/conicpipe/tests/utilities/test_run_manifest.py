# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

import json
from pathlib import Path

from conicpipe import __version__
from conicpipe.core.constants import RUN_MANIFEST_NAME
from conicpipe.core.types import Partition
from conicpipe.utilities.run_manifest import build_run_manifest, library_versions, to_json_value, write_run_manifest


class TestRunManifest:
    """Run manifests describe an invocation reproducibly"""


    def test_versions_cover_the_stack(self) -> None:
        versions = library_versions()

        assert versions["conicpipe"] == __version__
        assert set(versions) == {"conicpipe", "numpy", "scipy", "Pillow", "pydantic"}

    def test_to_json_value_converts_nested(self) -> None:
        value = {"path": Path("a/b"), "scales": (256, 512), "part": Partition.TRAIN, "nested": [{"k": Path("c")}]}

        assert to_json_value(value) == {
            "path": "a/b",
            "scales": [256, 512],
            "part": "train",
            "nested": [{"k": "c"}],
        }

    def test_parameters_are_sorted(self) -> None:
        manifest = build_run_manifest("count", 0, {"z": 1, "a": 2}, [Path("x.png")])

        assert list(manifest.parameters) == ["a", "z"]
        assert manifest.inputs == ["x.png"]

    def test_identical_runs_write_identical_bytes(self, tmp_path: Path) -> None:
        first_dir = tmp_path / "first"
        second_dir = tmp_path / "second"
        for directory in (first_dir, second_dir):
            write_run_manifest(build_run_manifest("split", 3, {"ratios": "4:1:0.1"}, [Path("m.json")]), directory)

        first = (first_dir / RUN_MANIFEST_NAME).read_bytes()
        assert first == (second_dir / RUN_MANIFEST_NAME).read_bytes()
        assert json.loads(first)["seed"] == 3
