# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
JSON report models written by the CLI.

Reports carry plain numbers only (no timestamps, no host details), so running
the same command twice writes the same bytes.
"""

from pydantic import BaseModel, ConfigDict, Field

# ============================================================================
# Shared
# ============================================================================


class ReportModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2) + "\n"


class ClassCounts(ReportModel):
    """Nucleus counts keyed by class name"""

    epithelial: int = Field(ge=0)
    lymphocyte: int = Field(ge=0)
    plasma: int = Field(ge=0)
    eosinophil: int = Field(ge=0)
    neutrophil: int = Field(ge=0)
    connective: int = Field(ge=0)
    total: int = Field(ge=0)


# ============================================================================
# count
# ============================================================================


class CountReport(ReportModel):
    instances_path: str
    classes_path: str
    counts: ClassCounts
    dropped_instance_ids: list[int]


# ============================================================================
# evaluate
# ============================================================================


class PqEntry(ReportModel):
    class_id: int
    class_name: str
    dq: float
    sq: float | None  # None without true positives
    pq: float


class AveragedPqEntry(PqEntry):
    defined_images: int


class ReferenceRecord(ReportModel):
    """Published leaderboard scores; informational only"""

    mpq_plus: float
    r2: float
    note: str


class MetricsReport(ReportModel):
    image_count: int
    pred_instance_count: int
    gt_instance_count: int
    match_threshold: float
    per_image: list[AveragedPqEntry]
    pooled: list[PqEntry]
    mpq: float | None
    mpq_plus: float | None
    excluded_classes: list[str]
    r2_per_class: dict[str, float]
    r2_mean: float
    reference: ReferenceRecord


# ============================================================================
# split
# ============================================================================


class PartitionBalanceEntry(ReportModel):
    partition: str
    size: int
    target_size: int
    totals: ClassCounts
    target_totals: dict[str, float]
    relative_deviation: dict[str, float | None]


class BalanceReport(ReportModel):
    ratios: str
    seed: int
    entry_count: int
    partitions: list[PartitionBalanceEntry]


# ============================================================================
# ensemble
# ============================================================================


class SourceEntry(ReportModel):
    scale: int
    instance_id: int


class FusedInstanceEntry(ReportModel):
    instance_id: int
    class_name: str
    pixel_count: int
    scale_votes: int
    sources: list[SourceEntry]


class TileProvenance(ReportModel):
    tile: str
    instances: list[FusedInstanceEntry]


class ProvenanceReport(ReportModel):
    base_size: int
    iou_threshold: float
    min_votes: int
    scales: list[int]
    tiles: list[TileProvenance]


# ============================================================================
# normalize
# ============================================================================


class NormalizeReport(ReportModel):
    reference_stain_matrix: list[list[float]]
    reference_max_concentrations: list[float]
    normalized: list[str]
    skipped: dict[str, str]  # sample id -> reason
