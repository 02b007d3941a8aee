# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Dataset manifests.

A manifest is a JSON file with one record per tile: its id, the three PNG
paths and the cached per-class nucleus counts. Relative paths are resolved
against the manifest's own directory on load and written relative to the
destination manifest on save, so manifests can be moved together with their
data.
"""

from __future__ import annotations

import os
import re
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import Final

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from conicpipe.core.constants import NUM_CLASSES
from conicpipe.core.errors import DatasetError
from conicpipe.dataset.png_io import (
    read_class_map,
    read_instance_map,
    read_rgb,
    write_class_map,
    write_instance_map,
    write_rgb,
)
from conicpipe.processing.augment import AugmentSpec, Sample
from conicpipe.processing.label_maps import Composition, composition_from_maps, total_composition
from conicpipe.utilities.atomic_io import atomic_write_text
from conicpipe.utilities.logger import PipelineLogger, get_logger

_logger: Final[PipelineLogger] = get_logger("manifest")

SAMPLE_ID_PATTERN: Final[re.Pattern[str]] = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class AppliedAugmentation(BaseModel):
    """The augmentation that produced a derived tile"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    source_id: str
    flip_h: bool
    flip_v: bool
    rot90_quarter_turns: int = Field(ge=0, le=3)
    target_size: int | None = Field(default=None, gt=0)
    stain_normalize: bool
    stain_applied: bool

    @classmethod
    def from_spec(cls, source_id: str, spec: AugmentSpec, stain_applied: bool) -> AppliedAugmentation:
        return cls(
            source_id=source_id,
            flip_h=spec.flip_h,
            flip_v=spec.flip_v,
            rot90_quarter_turns=spec.rot90_quarter_turns,
            target_size=spec.target_size,
            stain_normalize=spec.stain_normalize,
            stain_applied=stain_applied,
        )


class ManifestEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    sample_id: str
    image: Path
    instances: Path
    classes: Path
    composition: list[int] = Field(min_length=NUM_CLASSES, max_length=NUM_CLASSES)
    augmentation: AppliedAugmentation | None = None

    @field_validator("sample_id")
    @classmethod
    def validate_sample_id(cls, v: str) -> str:
        """Ids double as file stems, so they must be path-safe"""
        if not SAMPLE_ID_PATTERN.match(v):
            raise ValueError(f"sample id must match {SAMPLE_ID_PATTERN.pattern}, got {v!r}")
        return v

    @field_validator("composition")
    @classmethod
    def validate_composition(cls, v: list[int]) -> list[int]:
        if any(count < 0 for count in v):
            raise ValueError(f"composition counts must be non-negative, got {v}")
        return v

    @property
    def counts(self) -> Composition:
        return Composition(counts=tuple(self.composition))

    def with_paths_relative_to(self, directory: Path) -> ManifestEntry:
        return self.model_copy(
            update={
                "image": Path(os.path.relpath(self.image, directory)),
                "instances": Path(os.path.relpath(self.instances, directory)),
                "classes": Path(os.path.relpath(self.classes, directory)),
            }
        )

    def with_paths_resolved_from(self, directory: Path) -> ManifestEntry:
        def resolve(path: Path) -> Path:
            return Path(os.path.normpath((directory / path).absolute()))

        return self.model_copy(
            update={
                "image": resolve(self.image),
                "instances": resolve(self.instances),
                "classes": resolve(self.classes),
            }
        )


class Manifest(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    entries: list[ManifestEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_unique_ids(self) -> Manifest:
        """Sample ids must be unique"""
        seen: set[str] = set()
        duplicates: list[str] = []
        for entry in self.entries:
            if entry.sample_id in seen:
                duplicates.append(entry.sample_id)
            seen.add(entry.sample_id)
        if duplicates:
            raise ValueError(f"duplicate sample ids: {sorted(set(duplicates))[:10]}")
        return self

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total_composition(self) -> Composition:
        return total_composition(entry.counts for entry in self.entries)

    def sample_ids(self) -> list[str]:
        return [entry.sample_id for entry in self.entries]


def make_manifest(entries: Iterable[ManifestEntry]) -> Manifest:
    try:
        return Manifest(entries=list(entries))
    except ValidationError as e:
        raise DatasetError(f"invalid manifest: {e}") from e


def load_manifest(path: Path) -> Manifest:
    """Read and validate a manifest; entry paths come back absolute"""
    path = Path(path)
    try:
        text: str = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DatasetError(f"cannot read manifest {path}: {e}") from e
    try:
        manifest = Manifest.model_validate_json(text)
    except ValidationError as e:
        raise DatasetError(f"invalid manifest {path}: {e}") from e

    base = path.parent
    return Manifest(entries=[entry.with_paths_resolved_from(base) for entry in manifest.entries])


def save_manifest(manifest: Manifest, path: Path) -> None:
    path = Path(path)
    base = path.parent.absolute()
    relative = Manifest(entries=[entry.with_paths_relative_to(base) for entry in manifest.entries])
    atomic_write_text(path, relative.model_dump_json(indent=2) + "\n")


def check_paths(manifest: Manifest) -> None:
    """Raise DatasetError listing entries whose files are missing"""
    missing: list[str] = [
        f"{entry.sample_id}: {p}"
        for entry in manifest.entries
        for p in (entry.image, entry.instances, entry.classes)
        if not Path(p).is_file()
    ]
    if missing:
        raise DatasetError(f"{len(missing)} manifest file(s) missing, e.g. {missing[:5]}")


@dataclass(frozen=True, slots=True)
class SamplePaths:
    image: Path
    instances: Path
    classes: Path

    @classmethod
    def in_directory(cls, root: Path, stem: str) -> SamplePaths:
        """<root>/images|instances|classes/<stem>.png"""
        return cls(
            image=root / "images" / f"{stem}.png",
            instances=root / "instances" / f"{stem}.png",
            classes=root / "classes" / f"{stem}.png",
        )


def load_sample(entry: ManifestEntry, check_composition: bool = True) -> Sample:
    """
    Read a tile and its label maps.

    The cached composition is recomputed from the maps; a mismatch is logged,
    not raised.
    """
    sample = Sample(
        image=read_rgb(entry.image),
        instances=read_instance_map(entry.instances),
        classes=read_class_map(entry.classes),
    )
    if check_composition:
        actual = composition_from_maps(sample.instances, sample.classes)
        if actual != entry.counts:
            _logger.warning(f"Sample {entry.sample_id}: manifest composition {entry.counts} != maps {actual}")
    return sample


def save_sample(sample: Sample, paths: SamplePaths) -> None:
    write_rgb(paths.image, sample.image)
    write_instance_map(paths.instances, sample.instances)
    write_class_map(paths.classes, sample.classes)


def entry_for_sample(
    sample_id: str, sample: Sample, paths: SamplePaths, augmentation: AppliedAugmentation | None = None
) -> ManifestEntry:
    try:
        return ManifestEntry(
            sample_id=sample_id,
            image=paths.image,
            instances=paths.instances,
            classes=paths.classes,
            composition=list(composition_from_maps(sample.instances, sample.classes).counts),
            augmentation=augmentation,
        )
    except ValidationError as e:
        raise DatasetError(f"invalid manifest entry {sample_id!r}: {e}") from e
