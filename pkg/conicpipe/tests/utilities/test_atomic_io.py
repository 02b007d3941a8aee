# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

from pathlib import Path

from conicpipe.utilities.atomic_io import atomic_write_bytes, atomic_write_text


class TestAtomicWrite:
    """Atomic replacement of output files"""


    def test_creates_parent_directories(self, tmp_path: Path) -> None:
        target = tmp_path / "a" / "b" / "out.txt"

        atomic_write_text(target, "hello")

        assert target.read_text(encoding="utf-8") == "hello"

    def test_overwrites_and_leaves_no_temp_files(self, tmp_path: Path) -> None:
        target = tmp_path / "out.bin"
        atomic_write_bytes(target, b"first")
        atomic_write_bytes(target, b"second")

        assert target.read_bytes() == b"second"
        assert [p.name for p in tmp_path.iterdir()] == ["out.bin"]
