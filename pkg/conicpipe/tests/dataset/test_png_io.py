# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from conicpipe.core.errors import DatasetError, DimensionError, ImageFormatError, LabelRangeError
from conicpipe.dataset.png_io import (
    LabelPairPaths,
    find_label_pairs,
    read_class_map,
    read_instance_map,
    read_label_pair,
    read_rgb,
    write_class_map,
    write_instance_map,
    write_rgb,
)
from conicpipe.tests.test_utilities import LabelMapFactory, write_label_dir


class TestPngRoundTrip:
    """Each layer survives a write and read unchanged"""


    def test_rgb(self, tmp_path: Path, rng: np.random.Generator) -> None:
        image = rng.integers(0, 256, size=(9, 7, 3), dtype=np.uint8)

        write_rgb(tmp_path / "tile.png", image)

        np.testing.assert_array_equal(read_rgb(tmp_path / "tile.png"), image)

    def test_instance_map_keeps_16_bit_ids(self, tmp_path: Path) -> None:
        labels = np.array([[0, 1, 300], [65535, 2, 0]], dtype=np.int32)

        write_instance_map(tmp_path / "inst.png", labels)
        loaded = read_instance_map(tmp_path / "inst.png")

        np.testing.assert_array_equal(loaded, labels)
        assert loaded.dtype == np.int32

    def test_class_map(self, tmp_path: Path, label_factory: LabelMapFactory) -> None:
        classes = label_factory.class_map_for(label_factory.instance_map(size=12))

        write_class_map(tmp_path / "cls.png", classes)

        np.testing.assert_array_equal(read_class_map(tmp_path / "cls.png"), classes)

    def test_palette_class_map_reads_indices(self, tmp_path: Path) -> None:
        indices = np.array([[0, 1], [5, 6]], dtype=np.uint8)
        image = Image.new("P", (2, 2))
        image.putdata(indices.ravel().tolist())
        image.putpalette([v for i in range(256) for v in (i, i, i)])
        image.save(tmp_path / "palette.png")

        np.testing.assert_array_equal(read_class_map(tmp_path / "palette.png"), indices)


class TestPngValidation:
    """Malformed inputs are rejected with a typed error"""


    def test_class_value_seven(self, tmp_path: Path) -> None:
        Image.fromarray(np.full((3, 3), 7, dtype=np.uint8)).save(tmp_path / "bad.png")

        with pytest.raises(LabelRangeError):
            read_class_map(tmp_path / "bad.png")

    def test_writing_class_value_seven(self, tmp_path: Path) -> None:
        with pytest.raises(LabelRangeError):
            write_class_map(tmp_path / "bad.png", np.full((3, 3), 7, dtype=np.uint8))
        assert not (tmp_path / "bad.png").exists()

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ImageFormatError):
            read_rgb(tmp_path / "absent.png")

    def test_not_a_png(self, tmp_path: Path) -> None:
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(tmp_path / "tile.jpg", format="JPEG")

        with pytest.raises(ImageFormatError):
            read_rgb(tmp_path / "tile.jpg")

    def test_garbage_bytes(self, tmp_path: Path) -> None:
        (tmp_path / "junk.png").write_bytes(b"not an image")

        with pytest.raises(ImageFormatError):
            read_instance_map(tmp_path / "junk.png")

    def test_rgb_tile_as_instance_map(self, tmp_path: Path) -> None:
        write_rgb(tmp_path / "tile.png", np.zeros((4, 4, 3), dtype=np.uint8))

        with pytest.raises(ImageFormatError):
            read_instance_map(tmp_path / "tile.png")

    def test_label_pair_size_mismatch(self, tmp_path: Path) -> None:
        paths = LabelPairPaths.in_directory(tmp_path, "t")
        write_instance_map(paths.instances, np.zeros((4, 4), dtype=np.int32))
        write_class_map(paths.classes, np.zeros((5, 5), dtype=np.uint8))

        with pytest.raises(DimensionError):
            read_label_pair(paths)


class TestFindLabelPairs:
    """Directory scans for <tile>_instances.png / <tile>_classes.png"""


    def test_sorted_pairs(self, tmp_path: Path) -> None:
        empty = np.zeros((2, 2), dtype=np.int32)
        write_label_dir(tmp_path, {"b": (empty, empty), "a": (empty, empty)})

        pairs = find_label_pairs(tmp_path)

        assert list(pairs) == ["a", "b"]
        assert pairs["a"].classes == tmp_path / "a_classes.png"

    def test_missing_class_map(self, tmp_path: Path) -> None:
        write_instance_map(tmp_path / "x_instances.png", np.zeros((2, 2), dtype=np.int32))

        with pytest.raises(DatasetError):
            find_label_pairs(tmp_path)

    def test_missing_directory(self, tmp_path: Path) -> None:
        with pytest.raises(DatasetError):
            find_label_pairs(tmp_path / "absent")
