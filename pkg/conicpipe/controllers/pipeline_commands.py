# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
One Command per CLI subcommand.

Commands raise PipelineError subclasses on bad data; the controller turns
those into failed CommandResults. On success the result carries the one-line
summary printed to stdout.
"""

from __future__ import annotations

import dataclasses
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Generic, TypeVar, override

from conicpipe.core.config import AugmentPolicy, EnsembleConfig, MacenkoParams, PipelineConfig, SplitRatios
from conicpipe.core.constants import IMAGE_SUFFIX, MIN_MATCH_THRESHOLD
from conicpipe.core.errors import ConfigurationError, DatasetError, DegenerateStainError, InsufficientTissueError
from conicpipe.core.types import Subcommand
from conicpipe.dataset.manifest import (
    AppliedAugmentation,
    ManifestEntry,
    SamplePaths,
    check_paths,
    entry_for_sample,
    load_manifest,
    load_sample,
    make_manifest,
    save_manifest,
    save_sample,
)
from conicpipe.dataset.png_io import (
    LabelPairPaths,
    find_label_pairs,
    read_label_pair,
    read_rgb,
    write_label_pair,
    write_rgb,
)
from conicpipe.dataset.splitting import balance_report, stratified_split
from conicpipe.models.report_builders import (
    build_balance_report,
    build_class_counts,
    build_metrics_report,
    build_provenance_report,
    build_tile_provenance,
)
from conicpipe.models.reports import CountReport, NormalizeReport, TileProvenance
from conicpipe.processing.augment import AugmentSpec, apply_detailed, build_scale_pyramid, sample_spec
from conicpipe.processing.ensemble import ScaledPrediction, fuse_detailed
from conicpipe.processing.label_maps import Composition, assign_instance_classes, composition
from conicpipe.processing.metrics import MatchResult, match_instances, mpq, r2_multiclass
from conicpipe.processing.stain_norm import (
    StainModel,
    estimate_stain_model,
    load_stain_model,
    normalize_to_reference,
    save_stain_model,
)
from conicpipe.utilities.atomic_io import atomic_write_text
from conicpipe.utilities.logger import PipelineLogger, get_logger
from conicpipe.utilities.worker_pool import map_ordered

T = TypeVar("T")

_logger: PipelineLogger = get_logger("pipeline_commands")


@dataclass
class CommandResult(Generic[T]):
    success: bool
    data: T | None = None
    error: str | None = None


@dataclass(frozen=True)
class PipelineContext:
    """Invocation-wide state handed to every command"""

    config: PipelineConfig
    threads: int = 1

    @property
    def seed(self) -> int:
        return self.config.global_config.seed


class Command(ABC, Generic[T]):

    @abstractmethod
    def execute(self, context: PipelineContext) -> CommandResult[T]:
        """Run the command"""
        pass

    @abstractmethod
    def get_description(self) -> str:
        """Get human-readable description of the command"""
        pass

    @property
    @abstractmethod
    def subcommand(self) -> Subcommand:
        pass

    @abstractmethod
    def inputs(self) -> list[Path]:
        """Input files and directories, for the run manifest"""
        pass

    @abstractmethod
    def output_location(self) -> Path:
        """Directory that receives the run manifest unless --output-dir overrides it"""
        pass

    def parameters(self) -> dict[str, object]:
        """Dataclass fields of the command as run-manifest parameters"""
        if dataclasses.is_dataclass(self):
            return {f.name: _parameter_value(getattr(self, f.name)) for f in dataclasses.fields(self)}
        return {}


def _parameter_value(value: object) -> object:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _parameter_value(getattr(value, f.name)) for f in dataclasses.fields(value)}
    return value


def resolve_reference(
    reference_image: Path | None, reference_model: Path | None, params: MacenkoParams
) -> StainModel | None:
    """Reference stain model from an image or a saved model file (at most one)"""
    if reference_image is not None and reference_model is not None:
        raise ConfigurationError("give either a reference image or a reference model, not both")
    if reference_model is not None:
        return load_stain_model(reference_model)
    if reference_image is not None:
        return estimate_stain_model(read_rgb(reference_image), params)
    return None


# ---------------------------------------------------------------------------
# count
# ---------------------------------------------------------------------------


@dataclass
class CountCommand(Command[str]):
    instances: Path
    classes: Path
    report: Path | None = None

    @property
    @override
    def subcommand(self) -> Subcommand:
        return Subcommand.COUNT

    @override
    def execute(self, context: PipelineContext) -> CommandResult[str]:
        paths = LabelPairPaths(instances=self.instances, classes=self.classes)
        instance_map, class_map = read_label_pair(paths)
        assignment = assign_instance_classes(instance_map, class_map)
        counts: Composition = composition(assignment.records)

        if self.report is not None:
            report = CountReport(
                instances_path=str(self.instances),
                classes_path=str(self.classes),
                counts=build_class_counts(counts),
                dropped_instance_ids=list(assignment.dropped_ids),
            )
            atomic_write_text(self.report, report.to_json())

        return CommandResult(success=True, data=f"count {counts.counts} total={counts.total}")

    @override
    def get_description(self) -> str:
        return f"Count nuclei per class in {self.instances} / {self.classes}"

    @override
    def inputs(self) -> list[Path]:
        return [self.instances, self.classes]

    @override
    def output_location(self) -> Path:
        return (self.report or self.instances).parent


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


@dataclass
class EvaluateCommand(Command[str]):
    pred: Path
    gt: Path
    report: Path
    threshold: float = MIN_MATCH_THRESHOLD

    @property
    @override
    def subcommand(self) -> Subcommand:
        return Subcommand.EVALUATE

    @override
    def execute(self, context: PipelineContext) -> CommandResult[str]:
        gt_pairs = find_label_pairs(self.gt)
        pred_pairs = find_label_pairs(self.pred)
        if not gt_pairs:
            raise DatasetError(f"no ground-truth tiles in {self.gt}")
        missing = sorted(set(gt_pairs) - set(pred_pairs))
        if missing:
            raise DatasetError(f"{len(missing)} tile(s) have no prediction, e.g. {missing[:5]}")
        extra = sorted(set(pred_pairs) - set(gt_pairs))
        if extra:
            _logger.warning(f"Ignoring {len(extra)} prediction tile(s) without ground truth, e.g. {extra[:5]}")

        def evaluate_tile(tile: str) -> tuple[MatchResult, Composition, Composition]:
            pred_instances, pred_classes = read_label_pair(pred_pairs[tile])
            gt_instances, gt_classes = read_label_pair(gt_pairs[tile])
            match = match_instances(pred_instances, pred_classes, gt_instances, gt_classes, self.threshold)
            pred_counts = composition(assign_instance_classes(pred_instances, pred_classes).records)
            gt_counts = composition(assign_instance_classes(gt_instances, gt_classes).records)
            return match, pred_counts, gt_counts

        per_tile = map_ordered(evaluate_tile, list(gt_pairs), context.threads)
        mpq_result = mpq([match for match, _, _ in per_tile])
        r2_result = r2_multiclass([p for _, p, _ in per_tile], [g for _, _, g in per_tile])

        report = build_metrics_report(mpq_result, r2_result, self.threshold)
        atomic_write_text(self.report, report.to_json())

        return CommandResult(
            success=True,
            data=(
                f"evaluate images={mpq_result.image_count} mpq={_fmt(mpq_result.mpq)} "
                f"mpq_plus={_fmt(mpq_result.mpq_plus)} r2={r2_result.mean:.5f}"
            ),
        )

    @override
    def get_description(self) -> str:
        return f"Evaluate {self.pred} against {self.gt}"

    @override
    def inputs(self) -> list[Path]:
        return [self.pred, self.gt]

    @override
    def output_location(self) -> Path:
        return self.report.parent


def _fmt(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.5f}"


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------


@dataclass
class SplitCommand(Command[str]):
    manifest: Path
    ratios: SplitRatios
    out_prefix: Path

    @property
    @override
    def subcommand(self) -> Subcommand:
        return Subcommand.SPLIT

    def partition_path(self, name: str) -> Path:
        return self.out_prefix.with_name(f"{self.out_prefix.name}.{name}.json")

    @override
    def execute(self, context: PipelineContext) -> CommandResult[str]:
        source = load_manifest(self.manifest)
        parts = stratified_split(source, self.ratios, context.seed)

        for name, part in zip(("train", "val", "test"), parts, strict=True):
            save_manifest(part, self.partition_path(name))

        report = build_balance_report(balance_report(parts, self.ratios), self.ratios, context.seed)
        atomic_write_text(self.partition_path("balance"), report.to_json())

        return CommandResult(
            success=True, data=f"split {len(source)} -> {'/'.join(str(len(p)) for p in parts)} ratios={self.ratios}"
        )

    @override
    def get_description(self) -> str:
        return f"Split {self.manifest} at {self.ratios}"

    @override
    def inputs(self) -> list[Path]:
        return [self.manifest]

    @override
    def output_location(self) -> Path:
        return self.out_prefix.parent

    @override
    def parameters(self) -> dict[str, object]:
        return {"manifest": self.manifest, "ratios": str(self.ratios), "out_prefix": self.out_prefix}


# ---------------------------------------------------------------------------
# normalize
# ---------------------------------------------------------------------------


@dataclass
class NormalizeCommand(Command[str]):
    """Normalize every PNG tile in a directory (or a single tile) to a reference stain model"""

    input: Path
    out: Path
    reference_image: Path | None = None
    reference_model: Path | None = None
    save_reference: Path | None = None
    params: MacenkoParams = field(default_factory=MacenkoParams)
    pyramid: tuple[int, ...] = ()  # also write each tile at these square sizes

    def __post_init__(self) -> None:
        if any(scale <= 0 for scale in self.pyramid):
            raise ConfigurationError(f"pyramid sizes must be positive, got {self.pyramid}")

    @property
    @override
    def subcommand(self) -> Subcommand:
        return Subcommand.NORMALIZE

    def tiles(self) -> list[Path]:
        if self.input.is_file():
            return [self.input]
        if self.input.is_dir():
            return sorted(self.input.glob(f"*{IMAGE_SUFFIX}"))
        raise DatasetError(f"{self.input} does not exist")

    @override
    def execute(self, context: PipelineContext) -> CommandResult[str]:
        reference = resolve_reference(self.reference_image, self.reference_model, self.params)
        if reference is None:
            raise ConfigurationError("normalize needs --reference-image or --reference-model")
        if self.save_reference is not None:
            save_stain_model(reference, self.save_reference)

        tiles = self.tiles()
        if not tiles:
            raise DatasetError(f"no PNG tiles found in {self.input}")

        def normalize_tile(path: Path) -> str | None:
            image = read_rgb(path)
            skipped: str | None = None
            try:
                image = normalize_to_reference(image, self.params, reference)
            except (InsufficientTissueError, DegenerateStainError) as e:
                # Written unchanged so the output set stays complete
                _logger.warning(f"Skipping stain normalization of {path.name}: {e}")
                skipped = str(e)
            write_rgb(self.out / path.name, image)
            if self.pyramid:
                for scale, level in build_scale_pyramid(image, self.pyramid).items():
                    write_rgb(self.out / str(scale) / path.name, level)
            return skipped

        outcomes = map_ordered(normalize_tile, tiles, context.threads)
        skipped = {path.stem: reason for path, reason in zip(tiles, outcomes, strict=True) if reason is not None}

        report = NormalizeReport(
            reference_stain_matrix=[[float(v) for v in row] for row in reference.stain_matrix],
            reference_max_concentrations=[float(v) for v in reference.max_concentrations],
            normalized=[path.stem for path, reason in zip(tiles, outcomes, strict=True) if reason is None],
            skipped=skipped,
        )
        atomic_write_text(self.out / "normalize_report.json", report.to_json())

        return CommandResult(
            success=True,
            data=f"normalize tiles={len(tiles)} normalized={len(tiles) - len(skipped)} skipped={len(skipped)}",
        )

    @override
    def get_description(self) -> str:
        return f"Normalize {self.input} into {self.out}"

    @override
    def inputs(self) -> list[Path]:
        return [p for p in (self.input, self.reference_image, self.reference_model) if p is not None]

    @override
    def output_location(self) -> Path:
        return self.out


# ---------------------------------------------------------------------------
# augment
# ---------------------------------------------------------------------------


@dataclass
class AugmentCommand(Command[str]):
    manifest: Path
    out: Path
    policy: AugmentPolicy = field(default_factory=AugmentPolicy)
    copies: int = 1
    add_normalized: bool = False
    reference_image: Path | None = None
    reference_model: Path | None = None
    params: MacenkoParams = field(default_factory=MacenkoParams)

    def __post_init__(self) -> None:
        if self.copies < 0:
            raise ConfigurationError(f"copies must be non-negative, got {self.copies}")

    @property
    @override
    def subcommand(self) -> Subcommand:
        return Subcommand.AUGMENT

    def specs_for(self, seed: int, entry_index: int) -> list[AugmentSpec]:
        """Seeded specs for one entry, plus the stain-normalized copy when requested"""
        specs = [sample_spec(seed, self.policy, entry_index * self.copies + j) for j in range(self.copies)]
        if self.add_normalized:
            specs.append(AugmentSpec(stain_normalize=True))
        unique: list[AugmentSpec] = []
        for spec in specs:
            if spec not in unique:
                unique.append(spec)
        return unique

    @override
    def execute(self, context: PipelineContext) -> CommandResult[str]:
        source = load_manifest(self.manifest)
        check_paths(source)
        reference = resolve_reference(self.reference_image, self.reference_model, self.params)
        needs_reference = self.add_normalized or self.policy.p_stain_normalize > 0
        if needs_reference and reference is None:
            raise ConfigurationError("stain normalization requested without --reference-image or --reference-model")

        def augment_entry(item: tuple[int, ManifestEntry]) -> list[ManifestEntry]:
            index, entry = item
            sample = load_sample(entry)
            produced: list[ManifestEntry] = []
            for spec in self.specs_for(context.seed, index):
                result = apply_detailed(sample, spec, reference, self.params)
                stem = spec.output_stem(entry.sample_id)
                paths = SamplePaths.in_directory(self.out, stem)
                save_sample(result.sample, paths)
                produced.append(
                    entry_for_sample(
                        stem,
                        result.sample,
                        paths,
                        AppliedAugmentation.from_spec(entry.sample_id, spec, result.stain_applied),
                    )
                )
            return produced

        per_entry = map_ordered(augment_entry, list(enumerate(source.entries)), context.threads)
        output = make_manifest(entry for produced in per_entry for entry in produced)
        save_manifest(output, self.out / "manifest.json")

        return CommandResult(success=True, data=f"augment inputs={len(source)} outputs={len(output)}")

    @override
    def get_description(self) -> str:
        plural: str = "y" if self.copies == 1 else "ies"
        return f"Augment {self.manifest} into {self.out} ({self.copies} cop{plural} per tile)"

    @override
    def inputs(self) -> list[Path]:
        return [p for p in (self.manifest, self.reference_image, self.reference_model) if p is not None]

    @override
    def output_location(self) -> Path:
        return self.out


# ---------------------------------------------------------------------------
# ensemble
# ---------------------------------------------------------------------------


@dataclass
class EnsembleCommand(Command[str]):
    predictions: dict[int, Path]  # scale -> directory of label pairs
    out: Path
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    provenance: Path | None = None

    @property
    @override
    def subcommand(self) -> Subcommand:
        return Subcommand.ENSEMBLE

    @override
    def execute(self, context: PipelineContext) -> CommandResult[str]:
        if not self.predictions:
            raise ConfigurationError("ensemble needs at least one --pred scale=dir")

        pairs_by_scale = {scale: find_label_pairs(path) for scale, path in sorted(self.predictions.items())}
        tile_sets = {scale: set(pairs) for scale, pairs in pairs_by_scale.items()}
        tiles = sorted(set.union(*tile_sets.values()))
        for scale, present in tile_sets.items():
            missing = sorted(set(tiles) - present)
            if missing:
                raise DatasetError(f"scale {scale} is missing {len(missing)} tile(s), e.g. {missing[:5]}")
        if not tiles:
            raise DatasetError("no prediction tiles found")

        def fuse_tile(tile: str) -> TileProvenance:
            preds: list[ScaledPrediction] = []
            for scale, pairs in pairs_by_scale.items():
                instances, classes = read_label_pair(pairs[tile])
                preds.append(ScaledPrediction(scale=scale, instances=instances, classes=classes))
            result = fuse_detailed(preds, self.ensemble)
            write_label_pair(LabelPairPaths.in_directory(self.out, tile), result.instances, result.classes)
            return build_tile_provenance(tile, result.provenance)

        provenance = map_ordered(fuse_tile, tiles, context.threads)
        if self.provenance is not None:
            atomic_write_text(self.provenance, build_provenance_report(self.ensemble, provenance).to_json())

        fused_total = sum(len(tile.instances) for tile in provenance)
        return CommandResult(
            success=True,
            data=f"ensemble tiles={len(tiles)} scales={sorted(self.predictions)} fused_instances={fused_total}",
        )

    @override
    def get_description(self) -> str:
        return f"Fuse {len(self.predictions)} scale(s) into {self.out}"

    @override
    def inputs(self) -> list[Path]:
        return [path for _, path in sorted(self.predictions.items())]

    @override
    def output_location(self) -> Path:
        return self.out
