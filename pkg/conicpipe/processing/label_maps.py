# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Algebra on instance and class label maps.

Instance maps are H x W integer arrays (0 = background, one positive id per
nucleus); class maps are H x W arrays with values 0..6. All functions here are
pure and never modify their inputs.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Final, override

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from conicpipe.core.constants import CLASS_IDS, CLASS_NAMES, MAX_CLASS_ID, MAX_INSTANCE_ID, NUM_CLASSES
from conicpipe.core.errors import DimensionError, LabelRangeError, UndefinedInputError
from conicpipe.core.types import BinaryMask, BoundingBox, ClassMap, InstanceMap
from conicpipe.utilities.logger import PipelineLogger, get_logger

_logger: Final[PipelineLogger] = get_logger("label_maps")

# 8-connectivity: diagonal neighbours belong to the same component
_EIGHT_CONNECTED: Final[NDArray[np.bool_]] = np.ones((3, 3), dtype=bool)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def require_2d(array: NDArray[np.generic], what: str) -> None:
    if array.ndim != 2:
        raise DimensionError(f"{what} must be 2-D, got shape {array.shape}")
    if array.shape[0] == 0 or array.shape[1] == 0:
        raise DimensionError(f"{what} must have non-zero dimensions, got {array.shape}")


def require_same_shape(first: NDArray[np.generic], second: NDArray[np.generic], what: str) -> None:
    if first.shape[:2] != second.shape[:2]:
        raise DimensionError(f"{what}: shapes differ, {first.shape[:2]} vs {second.shape[:2]}")


def validate_instance_map(labels: NDArray[np.generic]) -> None:
    require_2d(labels, "instance map")
    if not np.issubdtype(labels.dtype, np.integer):
        raise LabelRangeError(f"instance map must hold integers, got {labels.dtype}")
    if labels.size and (int(labels.min()) < 0 or int(labels.max()) > MAX_INSTANCE_ID):
        raise LabelRangeError(
            f"instance ids must be in 0..{MAX_INSTANCE_ID}, got {int(labels.min())}..{int(labels.max())}"
        )


def validate_class_map(labels: NDArray[np.generic]) -> None:
    require_2d(labels, "class map")
    if not np.issubdtype(labels.dtype, np.integer):
        raise LabelRangeError(f"class map must hold integers, got {labels.dtype}")
    if labels.size and (int(labels.min()) < 0 or int(labels.max()) > MAX_CLASS_ID):
        raise LabelRangeError(f"class ids must be in 0..{MAX_CLASS_ID}, got {int(labels.min())}..{int(labels.max())}")


def validate_rgb_image(image: NDArray[np.generic]) -> None:
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"RGB image must be H x W x 3, got shape {image.shape}")
    if image.shape[0] == 0 or image.shape[1] == 0:
        raise DimensionError(f"RGB image must have non-zero dimensions, got {image.shape}")
    if image.dtype != np.uint8:
        raise LabelRangeError(f"RGB image must be 8-bit, got {image.dtype}")


# ---------------------------------------------------------------------------
# Instance ids
# ---------------------------------------------------------------------------


def instance_ids(labels: InstanceMap) -> NDArray[np.int64]:
    """Sorted positive ids present in the map"""
    ids: NDArray[np.int64] = np.unique(labels).astype(np.int64)
    return ids[ids > 0]


def connected_components(mask: NDArray[np.generic]) -> InstanceMap:
    """
    Label maximal 8-connected foreground regions.

    Ids are 1..K in order of first encounter in a row-major scan; background
    (zero) pixels stay 0.
    """
    require_2d(mask, "mask")
    labels, _ = ndimage.label(mask != 0, structure=_EIGHT_CONNECTED)
    return relabel_sequential(labels.astype(np.int32, copy=False))


def relabel_sequential(labels: InstanceMap) -> InstanceMap:
    """
    Remap ids to 1..K in order of first appearance (row-major).

    The partition into instances and the background are preserved; applying it
    twice gives the same map as applying it once.
    """
    flat = labels.ravel()
    if flat.size == 0:
        return labels.copy()

    ids, first_index, inverse = np.unique(flat, return_index=True, return_inverse=True)
    foreground: NDArray[np.bool_] = ids != 0
    fg_positions = np.flatnonzero(foreground)
    appearance_order = np.argsort(first_index[foreground], kind="stable")

    new_ids = np.zeros(ids.shape[0], dtype=np.int64)
    new_ids[fg_positions[appearance_order]] = np.arange(1, fg_positions.shape[0] + 1)

    return new_ids[inverse.ravel()].reshape(labels.shape).astype(labels.dtype, copy=False)


def instance_iou(a_pixels: BinaryMask, b_pixels: BinaryMask) -> float:
    """
    Intersection over union of two pixel sets given as boolean masks.

    Raises UndefinedInputError when both sets are empty.
    """
    require_same_shape(a_pixels, b_pixels, "instance_iou")
    a_mask = np.asarray(a_pixels, dtype=bool)
    b_mask = np.asarray(b_pixels, dtype=bool)

    a_count = int(np.count_nonzero(a_mask))
    b_count = int(np.count_nonzero(b_mask))
    if a_count == 0 and b_count == 0:
        raise UndefinedInputError("IoU of two empty pixel sets is undefined")

    intersection = int(np.count_nonzero(a_mask & b_mask))
    return intersection / (a_count + b_count - intersection)


def resize_nearest(labels: NDArray[np.generic], height: int, width: int) -> NDArray[np.generic]:
    """
    Nearest-neighbour resample of a label map (pixel-centre aligned).

    Only existing values are copied, so the output value set is a subset of the
    input value set. Index arithmetic is integer-exact.
    """
    require_2d(labels, "label map")
    if height <= 0 or width <= 0:
        raise DimensionError(f"target size must be positive, got {height} x {width}")

    src_height, src_width = labels.shape
    if (src_height, src_width) == (height, width):
        return labels.copy()

    rows = ((2 * np.arange(height, dtype=np.int64) + 1) * src_height) // (2 * height)
    cols = ((2 * np.arange(width, dtype=np.int64) + 1) * src_width) // (2 * width)
    return labels[np.ix_(rows, cols)]


# ---------------------------------------------------------------------------
# Per-instance classes and composition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class InstanceRecord:
    """One nucleus: id, size, inclusive bounding box and plurality class"""

    instance_id: int
    pixel_count: int
    bbox: BoundingBox
    nucleus_class: int

    def __post_init__(self) -> None:
        if self.pixel_count < 1:
            raise UndefinedInputError(f"instance {self.instance_id} has no pixels")
        if self.nucleus_class not in CLASS_IDS:
            raise LabelRangeError(f"instance {self.instance_id} has class {self.nucleus_class}, expected 1..6")


@dataclass(frozen=True, slots=True)
class ClassAssignment:
    """Records for classified instances plus the ids dropped for lack of class pixels"""

    records: tuple[InstanceRecord, ...]
    dropped_ids: tuple[int, ...]


def assign_instance_classes(inst: InstanceMap, cls: ClassMap) -> ClassAssignment:
    """
    Give every instance the plurality class over its pixels.

    Background-class pixels do not vote; ties go to the smallest class id.
    Instances whose pixels are all background in the class map are dropped
    (and logged), not guessed.
    """
    require_same_shape(inst, cls, "assign_instance_classes")
    validate_instance_map(inst)
    validate_class_map(cls)

    foreground = inst > 0
    if not foreground.any():
        return ClassAssignment(records=(), dropped_ids=())

    fg_ids = inst[foreground].astype(np.int64)
    fg_classes = cls[foreground].astype(np.int64)
    ys, xs = np.nonzero(foreground)

    ids, dense = np.unique(fg_ids, return_inverse=True)
    dense = dense.ravel()
    num_ids: int = ids.shape[0]

    histogram = np.bincount(dense * (NUM_CLASSES + 1) + fg_classes, minlength=num_ids * (NUM_CLASSES + 1))
    histogram = histogram.reshape(num_ids, NUM_CLASSES + 1)
    pixel_counts = histogram.sum(axis=1)
    class_votes = histogram[:, 1:]
    has_class = class_votes.sum(axis=1) > 0
    # argmax returns the first maximum, i.e. the smallest class id on ties
    winners = np.argmax(class_votes, axis=1) + 1

    min_x = np.full(num_ids, np.iinfo(np.int64).max, dtype=np.int64)
    min_y = np.full(num_ids, np.iinfo(np.int64).max, dtype=np.int64)
    max_x = np.full(num_ids, -1, dtype=np.int64)
    max_y = np.full(num_ids, -1, dtype=np.int64)
    np.minimum.at(min_x, dense, xs)
    np.minimum.at(min_y, dense, ys)
    np.maximum.at(max_x, dense, xs)
    np.maximum.at(max_y, dense, ys)

    records: list[InstanceRecord] = []
    dropped: list[int] = []
    for index in range(num_ids):
        instance_id = int(ids[index])
        if not has_class[index]:
            dropped.append(instance_id)
            continue
        records.append(
            InstanceRecord(
                instance_id=instance_id,
                pixel_count=int(pixel_counts[index]),
                bbox=(int(min_x[index]), int(min_y[index]), int(max_x[index]), int(max_y[index])),
                nucleus_class=int(winners[index]),
            )
        )

    if dropped:
        _logger.warning(f"Dropped {len(dropped)} instance(s) with no class pixels: {dropped[:10]}")

    return ClassAssignment(records=tuple(records), dropped_ids=tuple(dropped))


@dataclass(frozen=True, slots=True)
class Composition:
    """Nuclei count per class, index 0 = class 1 (epithelial) ... index 5 = class 6 (connective)"""

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.counts) != NUM_CLASSES:
            raise DimensionError(f"composition needs {NUM_CLASSES} counts, got {len(self.counts)}")
        if any(c < 0 for c in self.counts):
            raise LabelRangeError(f"composition counts must be non-negative, got {self.counts}")

    @classmethod
    def zeros(cls) -> Composition:
        return cls(counts=(0,) * NUM_CLASSES)

    def __add__(self, other: Composition) -> Composition:
        return Composition(counts=tuple(a + b for a, b in zip(self.counts, other.counts, strict=True)))

    def count(self, nucleus_class: int) -> int:
        return self.counts[nucleus_class - 1]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def as_dict(self) -> dict[str, int]:
        return {CLASS_NAMES[class_id]: self.counts[class_id - 1] for class_id in CLASS_IDS}

    @classmethod
    def from_mapping(cls, counts: Mapping[int, int]) -> Composition:
        return cls(counts=tuple(counts.get(class_id, 0) for class_id in CLASS_IDS))

    @override
    def __repr__(self) -> str:
        return f"Composition{self.counts}"


def composition(records: Iterable[InstanceRecord]) -> Composition:
    """Count records per class"""
    tally: Counter[int] = Counter()
    for record in records:
        if record.nucleus_class not in CLASS_IDS:
            raise LabelRangeError(f"record class {record.nucleus_class} outside 1..6")
        tally[record.nucleus_class] += 1
    return Composition.from_mapping(tally)


def composition_from_maps(inst: InstanceMap, cls: ClassMap) -> Composition:
    return composition(assign_instance_classes(inst, cls).records)


def total_composition(compositions: Iterable[Composition]) -> Composition:
    result: Composition = Composition.zeros()
    for item in compositions:
        result = result + item
    return result
