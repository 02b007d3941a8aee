# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Label-preserving augmentation: flips, quarter-turn rotations, resizing and
stain normalization applied jointly to an image and its two label maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Final

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from conicpipe.core.config import AugmentPolicy, MacenkoParams
from conicpipe.core.errors import ConfigurationError, DegenerateStainError, DimensionError, InsufficientTissueError
from conicpipe.core.types import ClassMap, InstanceMap, RgbImage
from conicpipe.processing.label_maps import (
    require_same_shape,
    resize_nearest,
    validate_class_map,
    validate_instance_map,
    validate_rgb_image,
)
from conicpipe.processing.stain_norm import StainModel, normalize_to_reference
from conicpipe.utilities.logger import PipelineLogger, get_logger
from conicpipe.utilities.rng import sample_rng

_logger: Final[PipelineLogger] = get_logger("augment")

_QUARTER_TURNS: Final[tuple[int, ...]] = (0, 1, 2, 3)


@dataclass(frozen=True, slots=True)
class Sample:
    """An H&E tile with its instance and class maps (all H x W)"""

    image: RgbImage
    instances: InstanceMap
    classes: ClassMap

    def __post_init__(self) -> None:
        validate_rgb_image(self.image)
        validate_instance_map(self.instances)
        validate_class_map(self.classes)
        require_same_shape(self.image, self.instances, "sample image/instances")
        require_same_shape(self.instances, self.classes, "sample instances/classes")

    @property
    def height(self) -> int:
        return int(self.instances.shape[0])

    @property
    def width(self) -> int:
        return int(self.instances.shape[1])

    def equals(self, other: Sample) -> bool:
        """Value equality of all three layers (label dtypes may differ)"""
        return (
            np.array_equal(self.image, other.image)
            and np.array_equal(self.instances, other.instances)
            and np.array_equal(self.classes, other.classes)
        )


@dataclass(frozen=True, slots=True)
class AugmentSpec:
    flip_h: bool = False
    flip_v: bool = False
    rot90_quarter_turns: int = 0
    target_size: int | None = None
    stain_normalize: bool = False

    def __post_init__(self) -> None:
        if self.rot90_quarter_turns not in _QUARTER_TURNS:
            raise ConfigurationError(f"rot90_quarter_turns must be 0..3, got {self.rot90_quarter_turns}")
        if self.target_size is not None and self.target_size <= 0:
            raise ConfigurationError(f"target_size must be positive, got {self.target_size}")

    @property
    def is_identity(self) -> bool:
        return self == IDENTITY_SPEC

    @property
    def name_suffix(self) -> str:
        """
        Compact tag for output file names, e.g. 'fhvr1s512_sn' or 'fnr0sx'.
        """
        flips: str = ("h" if self.flip_h else "") + ("v" if self.flip_v else "")
        size: str = str(self.target_size) if self.target_size is not None else "x"
        stain: str = "_sn" if self.stain_normalize else ""
        return f"f{flips or 'n'}r{self.rot90_quarter_turns}s{size}{stain}"

    def output_stem(self, stem: str) -> str:
        return f"{stem}__{self.name_suffix}"


IDENTITY_SPEC: Final[AugmentSpec] = AugmentSpec()


@dataclass(frozen=True, slots=True)
class AugmentResult:
    sample: Sample
    spec: AugmentSpec
    stain_applied: bool


def sample_spec(seed: int, policy: AugmentPolicy, index: int = 0) -> AugmentSpec:
    """
    Deterministic AugmentSpec for (seed, sample index).

    A fixed number of values is drawn regardless of outcomes, so changing one
    probability never shifts the draws behind another.
    """
    rng = sample_rng(seed, index)
    flip_h_draw, flip_v_draw, rotate_draw, resize_draw, stain_draw = rng.random(5)
    turns = int(rng.integers(1, 4))
    size_index = int(rng.integers(0, len(policy.target_sizes)))

    return AugmentSpec(
        flip_h=bool(flip_h_draw < policy.p_flip_h),
        flip_v=bool(flip_v_draw < policy.p_flip_v),
        rot90_quarter_turns=turns if rotate_draw < policy.p_rotate else 0,
        target_size=policy.target_sizes[size_index] if resize_draw < policy.p_resize else None,
        stain_normalize=bool(stain_draw < policy.p_stain_normalize),
    )


def resize_bilinear(image: RgbImage, height: int, width: int) -> RgbImage:
    """Bilinear resize of an RGB tile"""
    if height <= 0 or width <= 0:
        raise DimensionError(f"target size must be positive, got {height} x {width}")
    if image.shape[:2] == (height, width):
        return image.copy()
    resized = Image.fromarray(np.ascontiguousarray(image)).resize((width, height), Image.Resampling.BILINEAR)
    return np.asarray(resized, dtype=np.uint8)


def _transform_layer(layer: NDArray[np.generic], spec: AugmentSpec) -> NDArray[np.generic]:
    result = layer
    if spec.flip_h:
        result = np.flip(result, axis=1)
    if spec.flip_v:
        result = np.flip(result, axis=0)
    if spec.rot90_quarter_turns:
        result = np.rot90(result, k=spec.rot90_quarter_turns, axes=(0, 1))
    return np.ascontiguousarray(result)


def apply_detailed(
    sample: Sample,
    spec: AugmentSpec,
    reference_stain: StainModel | None = None,
    params: MacenkoParams | None = None,
) -> AugmentResult:
    """
    Apply spec to a sample, reporting whether stain normalization happened.

    Stain normalization touches the image only and runs before any geometry;
    a tile with too little tissue or a degenerate stain estimate is passed
    through un-normalized with a warning.
    """
    if spec.stain_normalize and reference_stain is None:
        raise ConfigurationError("stain_normalize requested without a reference stain model")

    image: RgbImage = sample.image
    stain_applied: bool = False
    if spec.stain_normalize and reference_stain is not None:
        try:
            image = normalize_to_reference(image, params or MacenkoParams(), reference_stain)
            stain_applied = True
        except (InsufficientTissueError, DegenerateStainError) as e:
            _logger.warning(f"Skipping stain normalization: {e}")

    image = _transform_layer(image, spec)
    instances = _transform_layer(sample.instances, spec)
    classes = _transform_layer(sample.classes, spec)

    if spec.target_size is not None:
        image = resize_bilinear(image, spec.target_size, spec.target_size)
        instances = resize_nearest(instances, spec.target_size, spec.target_size)
        classes = resize_nearest(classes, spec.target_size, spec.target_size)

    return AugmentResult(
        sample=Sample(image=image, instances=instances, classes=classes),
        spec=spec,
        stain_applied=stain_applied,
    )


def apply(
    sample: Sample,
    spec: AugmentSpec,
    reference_stain: StainModel | None = None,
    params: MacenkoParams | None = None,
) -> Sample:
    return apply_detailed(sample, spec, reference_stain, params).sample


def build_scale_pyramid(image: RgbImage, scales: tuple[int, ...]) -> dict[int, RgbImage]:
    """Square bilinear copies of a tile at each ensemble input scale"""
    validate_rgb_image(image)
    if not scales:
        raise ConfigurationError("at least one scale is required")
    return {scale: resize_bilinear(image, scale, scale) for scale in scales}
