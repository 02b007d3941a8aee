# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
PNG storage for tiles and label maps.

RGB tiles are 8-bit RGB PNGs, instance maps 16-bit grayscale (ids 0..65535) and
class maps 8-bit grayscale (values 0..6). Every read validates its layer;
every write is atomic.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Final

import numpy as np
from numpy.typing import NDArray
from PIL import Image, UnidentifiedImageError

from conicpipe.core.constants import CLASS_SUFFIX, INSTANCE_SUFFIX
from conicpipe.core.errors import DatasetError, ImageFormatError
from conicpipe.core.types import ClassMap, InstanceMap, RgbImage
from conicpipe.processing.label_maps import (
    require_same_shape,
    validate_class_map,
    validate_instance_map,
    validate_rgb_image,
)
from conicpipe.utilities.atomic_io import atomic_write_bytes

_INSTANCE_MODES: Final[frozenset[str]] = frozenset({"I;16", "I;16B", "I;16L", "I", "L"})
_CLASS_MODES: Final[frozenset[str]] = frozenset({"L", "P"})


def _open(path: Path) -> Image.Image:
    try:
        with Image.open(path) as handle:
            if handle.format != "PNG":
                raise ImageFormatError(f"{path} is {handle.format}, expected PNG")
            handle.load()
            return handle.copy()
    except FileNotFoundError as e:
        raise ImageFormatError(f"{path} does not exist") from e
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise ImageFormatError(f"cannot decode {path}: {e}") from e


def _encode_png(array: NDArray[np.generic]) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(array)).save(buffer, format="PNG")
    return buffer.getvalue()


def read_rgb(path: Path) -> RgbImage:
    image = _open(path)
    if image.mode != "RGB":
        raise ImageFormatError(f"{path}: expected an RGB image, got mode {image.mode}")
    return np.asarray(image, dtype=np.uint8)


def write_rgb(path: Path, image: RgbImage) -> None:
    validate_rgb_image(image)
    atomic_write_bytes(path, _encode_png(image))


def read_instance_map(path: Path) -> InstanceMap:
    image = _open(path)
    if image.mode not in _INSTANCE_MODES:
        raise ImageFormatError(f"{path}: expected a 16-bit grayscale instance map, got mode {image.mode}")
    labels = np.asarray(image).astype(np.int32)
    validate_instance_map(labels)
    return labels


def write_instance_map(path: Path, labels: InstanceMap) -> None:
    validate_instance_map(labels)
    atomic_write_bytes(path, _encode_png(labels.astype(np.uint16)))


def read_class_map(path: Path) -> ClassMap:
    image = _open(path)
    if image.mode not in _CLASS_MODES:
        raise ImageFormatError(f"{path}: expected an 8-bit grayscale class map, got mode {image.mode}")
    # Palette images carry their class ids as palette indices
    labels = np.asarray(image).astype(np.uint8)
    validate_class_map(labels)
    return labels


def write_class_map(path: Path, labels: ClassMap) -> None:
    validate_class_map(labels)
    atomic_write_bytes(path, _encode_png(labels.astype(np.uint8)))


@dataclass(frozen=True, slots=True)
class LabelPairPaths:
    instances: Path
    classes: Path

    @classmethod
    def in_directory(cls, directory: Path, tile: str) -> LabelPairPaths:
        return cls(instances=directory / f"{tile}{INSTANCE_SUFFIX}", classes=directory / f"{tile}{CLASS_SUFFIX}")


def find_label_pairs(directory: Path) -> dict[str, LabelPairPaths]:
    """
    Tiles stored as <tile>_instances.png + <tile>_classes.png, keyed by tile
    name in sorted order. An instance map without its class map is an error.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"{directory} is not a directory")

    pairs: dict[str, LabelPairPaths] = {}
    for path in sorted(directory.glob(f"*{INSTANCE_SUFFIX}")):
        tile = path.name[: -len(INSTANCE_SUFFIX)]
        paths = LabelPairPaths.in_directory(directory, tile)
        if not paths.classes.is_file():
            raise DatasetError(f"{path} has no matching class map {paths.classes.name}")
        pairs[tile] = paths
    return pairs


def read_label_pair(paths: LabelPairPaths) -> tuple[InstanceMap, ClassMap]:
    instances = read_instance_map(paths.instances)
    classes = read_class_map(paths.classes)
    require_same_shape(instances, classes, f"{paths.instances.name} / {paths.classes.name}")
    return instances, classes


def write_label_pair(paths: LabelPairPaths, instances: InstanceMap, classes: ClassMap) -> None:
    require_same_shape(instances, classes, f"{paths.instances.name} / {paths.classes.name}")
    write_instance_map(paths.instances, instances)
    write_class_map(paths.classes, classes)
