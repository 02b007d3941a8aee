# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

from __future__ import annotations

from conicpipe.core.config import EnsembleConfig, SplitRatios
from conicpipe.core.constants import CLASS_IDS, CLASS_NAMES
from conicpipe.dataset.splitting import PartitionBalance
from conicpipe.models.reports import (
    AveragedPqEntry,
    BalanceReport,
    ClassCounts,
    FusedInstanceEntry,
    MetricsReport,
    PartitionBalanceEntry,
    PqEntry,
    ProvenanceReport,
    ReferenceRecord,
    SourceEntry,
    TileProvenance,
)
from conicpipe.processing.ensemble import FusedInstance
from conicpipe.processing.label_maps import Composition
from conicpipe.processing.metrics import REFERENCE_RESULTS, MpqResult, R2Result


def build_class_counts(composition: Composition) -> ClassCounts:
    """Build a name-keyed count record"""
    return ClassCounts(**composition.as_dict(), total=composition.total)


def build_reference_record() -> ReferenceRecord:
    return ReferenceRecord(
        mpq_plus=REFERENCE_RESULTS.mpq_plus,
        r2=REFERENCE_RESULTS.r2,
        note="published challenge test-set scores of the trained model; not reproducible from this package",
    )


def build_metrics_report(mpq_result: MpqResult, r2_result: R2Result, threshold: float) -> MetricsReport:
    """Build the evaluate report from both metric families"""
    per_image = [
        AveragedPqEntry(
            class_id=c,
            class_name=CLASS_NAMES[c],
            dq=score.dq,
            sq=score.sq,
            pq=score.pq,
            defined_images=score.defined_images,
        )
        for c, score in sorted(mpq_result.per_image.items())
    ]
    pooled = [
        PqEntry(class_id=c, class_name=CLASS_NAMES[c], dq=score.dq, sq=score.sq, pq=score.pq)
        for c, score in sorted(mpq_result.pooled.items())
    ]
    return MetricsReport(
        image_count=mpq_result.image_count,
        pred_instance_count=mpq_result.pred_instance_count,
        gt_instance_count=mpq_result.gt_instance_count,
        match_threshold=threshold,
        per_image=per_image,
        pooled=pooled,
        mpq=mpq_result.mpq,
        mpq_plus=mpq_result.mpq_plus,
        excluded_classes=[CLASS_NAMES[c] for c in mpq_result.excluded_classes],
        r2_per_class={CLASS_NAMES[c]: r2_result.per_class[c] for c in CLASS_IDS},
        r2_mean=r2_result.mean,
        reference=build_reference_record(),
    )


def build_balance_report(
    balance: tuple[PartitionBalance, ...], ratios: SplitRatios, seed: int
) -> BalanceReport:
    partitions = [
        PartitionBalanceEntry(
            partition=item.partition.value,
            size=item.size,
            target_size=item.target_size,
            totals=build_class_counts(item.totals),
            target_totals={CLASS_NAMES[c]: t for c, t in zip(CLASS_IDS, item.target_totals, strict=True)},
            relative_deviation={
                CLASS_NAMES[c]: d for c, d in zip(CLASS_IDS, item.relative_deviation, strict=True)
            },
        )
        for item in balance
    ]
    return BalanceReport(
        ratios=str(ratios),
        seed=seed,
        entry_count=sum(item.size for item in balance),
        partitions=partitions,
    )


def build_tile_provenance(tile: str, provenance: tuple[FusedInstance, ...]) -> TileProvenance:
    return TileProvenance(
        tile=tile,
        instances=[
            FusedInstanceEntry(
                instance_id=fused.instance_id,
                class_name=CLASS_NAMES[fused.nucleus_class],
                pixel_count=fused.pixel_count,
                scale_votes=fused.scale_votes,
                sources=[SourceEntry(scale=s.scale, instance_id=s.instance_id) for s in fused.sources],
            )
            for fused in provenance
        ],
    )


def build_provenance_report(cfg: EnsembleConfig, tiles: list[TileProvenance]) -> ProvenanceReport:
    return ProvenanceReport(
        base_size=cfg.base_size,
        iou_threshold=cfg.iou_threshold,
        min_votes=cfg.min_votes,
        scales=sorted(cfg.scales),
        tiles=tiles,
    )
