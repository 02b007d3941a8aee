# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Challenge evaluation metrics.

Segmentation and classification are scored with multi-class panoptic
quality: per class, PQ = DQ * SQ where DQ = |TP| / (|TP| + FP/2 + FN/2) and SQ
is the mean IoU of matched pairs. Counting is scored with the multi-class
coefficient of determination on per-tile nucleus counts.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Final

import numpy as np
from numpy.typing import NDArray

from conicpipe.core.constants import CLASS_IDS, MIN_MATCH_THRESHOLD
from conicpipe.core.errors import ConfigurationError, DimensionError, EmptyInputError
from conicpipe.core.types import ClassMap, InstanceMap
from conicpipe.processing.label_maps import Composition, assign_instance_classes, require_same_shape
from conicpipe.utilities.logger import PipelineLogger, get_logger

_logger: Final[PipelineLogger] = get_logger("metrics")


@dataclass(frozen=True, slots=True)
class ReferenceResults:
    """Published challenge-leaderboard scores, kept as a record only"""

    mpq_plus: float
    r2: float


REFERENCE_RESULTS: Final[ReferenceResults] = ReferenceResults(mpq_plus=0.40585, r2=0.42771)


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class MatchedPair:
    pred_id: int
    gt_id: int
    iou: float


@dataclass(frozen=True, slots=True)
class ClassMatch:
    """TP pairs and unmatched counts for one class in one image"""

    nucleus_class: int
    tp_pairs: tuple[MatchedPair, ...] = ()
    fp: int = 0
    fn: int = 0

    @property
    def tp(self) -> int:
        return len(self.tp_pairs)

    @property
    def iou_sum(self) -> float:
        return math.fsum(pair.iou for pair in self.tp_pairs)

    @property
    def is_empty(self) -> bool:
        return self.tp == 0 and self.fp == 0 and self.fn == 0


@dataclass(frozen=True, slots=True)
class MatchResult:
    per_class: dict[int, ClassMatch] = field(default_factory=dict)

    def for_class(self, nucleus_class: int) -> ClassMatch:
        return self.per_class.get(nucleus_class, ClassMatch(nucleus_class=nucleus_class))

    @property
    def pred_count(self) -> int:
        return sum(m.tp + m.fp for m in self.per_class.values())

    @property
    def gt_count(self) -> int:
        return sum(m.tp + m.fn for m in self.per_class.values())


def match_instances(
    pred_instances: InstanceMap,
    pred_classes: ClassMap,
    gt_instances: InstanceMap,
    gt_classes: ClassMap,
    threshold: float = MIN_MATCH_THRESHOLD,
) -> MatchResult:
    """
    Class-wise one-to-one matching of predicted to ground-truth instances.

    Pairs need IoU strictly above threshold. With threshold >= 0.5 an instance
    can exceed it with at most one partner, so taking pairs greedily by
    descending IoU is the optimal matching. A prediction whose class differs
    from the ground truth it overlaps counts as FP plus FN.
    """
    if threshold < MIN_MATCH_THRESHOLD or threshold > 1.0:
        raise ConfigurationError(f"match threshold must be in [{MIN_MATCH_THRESHOLD}, 1], got {threshold}")
    require_same_shape(pred_instances, gt_instances, "match_instances")
    require_same_shape(pred_instances, pred_classes, "match_instances prediction")
    require_same_shape(gt_instances, gt_classes, "match_instances ground truth")

    pred_records = assign_instance_classes(pred_instances, pred_classes).records
    gt_records = assign_instance_classes(gt_instances, gt_classes).records
    pred_class = {r.instance_id: r.nucleus_class for r in pred_records}
    gt_class = {r.instance_id: r.nucleus_class for r in gt_records}
    pred_area = {r.instance_id: r.pixel_count for r in pred_records}
    gt_area = {r.instance_id: r.pixel_count for r in gt_records}

    # Joint histogram over pixels where both maps are foreground
    pred_flat = pred_instances.ravel().astype(np.int64)
    gt_flat = gt_instances.ravel().astype(np.int64)
    both = (pred_flat > 0) & (gt_flat > 0)
    candidates: dict[int, list[tuple[float, int, int]]] = {c: [] for c in CLASS_IDS}
    if both.any():
        pairs, intersections = np.unique(
            np.stack([pred_flat[both], gt_flat[both]], axis=1), axis=0, return_counts=True
        )
        for (pred_id, gt_id), intersection in zip(pairs.tolist(), intersections.tolist(), strict=True):
            c = pred_class.get(pred_id)
            if c is None or gt_class.get(gt_id) != c:
                continue
            iou = intersection / (pred_area[pred_id] + gt_area[gt_id] - intersection)
            if iou > threshold:
                candidates[c].append((iou, pred_id, gt_id))

    per_class: dict[int, ClassMatch] = {}
    for c in CLASS_IDS:
        used_pred: set[int] = set()
        used_gt: set[int] = set()
        tp_pairs: list[MatchedPair] = []
        for iou, pred_id, gt_id in sorted(candidates[c], key=lambda t: (-t[0], t[1], t[2])):
            if pred_id in used_pred or gt_id in used_gt:
                continue
            used_pred.add(pred_id)
            used_gt.add(gt_id)
            tp_pairs.append(MatchedPair(pred_id=pred_id, gt_id=gt_id, iou=iou))

        n_pred = sum(1 for v in pred_class.values() if v == c)
        n_gt = sum(1 for v in gt_class.values() if v == c)
        tp_pairs.sort(key=lambda pair: pair.gt_id)
        per_class[c] = ClassMatch(
            nucleus_class=c, tp_pairs=tuple(tp_pairs), fp=n_pred - len(tp_pairs), fn=n_gt - len(tp_pairs)
        )

    return MatchResult(per_class=per_class)


# ---------------------------------------------------------------------------
# Panoptic quality
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class PqScore:
    """DQ, SQ and PQ = DQ * SQ. sq is None when there are no true positives."""

    dq: float
    sq: float | None
    pq: float


def pq_from_counts(tp: int, iou_sum: float, fp: int, fn: int) -> PqScore | None:
    """
    PQ from aggregate statistics; None when tp, fp and fn are all zero.
    """
    if tp < 0 or fp < 0 or fn < 0:
        raise ConfigurationError(f"match counts must be non-negative, got tp={tp} fp={fp} fn={fn}")
    if tp == 0 and fp == 0 and fn == 0:
        return None
    dq = tp / (tp + 0.5 * fp + 0.5 * fn)
    if tp == 0:
        return PqScore(dq=dq, sq=None, pq=0.0)
    sq = iou_sum / tp
    return PqScore(dq=dq, sq=sq, pq=dq * sq)


def pq_from_stats(tp_ious: Sequence[float], fp: int, fn: int) -> PqScore | None:
    return pq_from_counts(len(tp_ious), math.fsum(tp_ious), fp, fn)


def pq_for_class(match: ClassMatch) -> PqScore | None:
    return pq_from_counts(match.tp, match.iou_sum, match.fp, match.fn)


@dataclass(frozen=True, slots=True)
class AveragedPqScore:
    """Per-image PQ components averaged over the images where the class is defined"""

    dq: float
    sq: float | None  # over images with at least one TP
    pq: float
    defined_images: int


@dataclass(frozen=True, slots=True)
class MpqResult:
    per_image: dict[int, AveragedPqScore]
    pooled: dict[int, PqScore]
    mpq: float | None  # per-image variant
    mpq_plus: float | None  # pooled variant
    excluded_classes: tuple[int, ...]
    image_count: int
    pred_instance_count: int
    gt_instance_count: int


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def mpq(dataset: Sequence[MatchResult]) -> MpqResult:
    """
    Multi-class PQ in both variants.

    Per-image: PQ per class per image, averaged over images where that class
    is defined, then over classes. Pooled (mPQ+): TP, FP, FN and IoU sums
    summed over the dataset before computing PQ per class. Classes undefined in
    every image are excluded from both class means.
    """
    if not dataset:
        raise EmptyInputError("mpq needs at least one image")

    per_image: dict[int, AveragedPqScore] = {}
    pooled: dict[int, PqScore] = {}
    excluded: list[int] = []

    for c in CLASS_IDS:
        matches = [result.for_class(c) for result in dataset]
        image_scores = [score for score in (pq_for_class(m) for m in matches) if score is not None]
        if not image_scores:
            excluded.append(c)
            continue

        sq_values = [score.sq for score in image_scores if score.sq is not None]
        per_image[c] = AveragedPqScore(
            dq=_mean([score.dq for score in image_scores]),
            sq=_mean(sq_values) if sq_values else None,
            pq=_mean([score.pq for score in image_scores]),
            defined_images=len(image_scores),
        )

        pooled_score = pq_from_counts(
            tp=sum(m.tp for m in matches),
            iou_sum=math.fsum(pair.iou for m in matches for pair in m.tp_pairs),
            fp=sum(m.fp for m in matches),
            fn=sum(m.fn for m in matches),
        )
        assert pooled_score is not None
        pooled[c] = pooled_score

    if excluded:
        _logger.info(f"Classes undefined in every image, excluded from mPQ: {excluded}")

    return MpqResult(
        per_image=per_image,
        pooled=pooled,
        mpq=_mean([s.pq for s in per_image.values()]) if per_image else None,
        mpq_plus=_mean([s.pq for s in pooled.values()]) if pooled else None,
        excluded_classes=tuple(excluded),
        image_count=len(dataset),
        pred_instance_count=sum(result.pred_count for result in dataset),
        gt_instance_count=sum(result.gt_count for result in dataset),
    )


# ---------------------------------------------------------------------------
# Composition R^2
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class R2Result:
    per_class: dict[int, float]
    mean: float


def _r2(pred: NDArray[np.float64], gt: NDArray[np.float64]) -> float:
    residual = float(np.sum((gt - pred) ** 2))
    total = float(np.sum((gt - gt.mean()) ** 2))
    if total == 0.0:
        # Constant ground truth: perfect only if every prediction matches it
        return 1.0 if residual == 0.0 else 0.0
    return 1.0 - residual / total


def r2_multiclass(preds: Sequence[Composition], gts: Sequence[Composition]) -> R2Result:
    """R^2 = 1 - SS_res / SS_tot per class over images, then the mean over the six classes"""
    if len(preds) != len(gts):
        raise DimensionError(f"prediction and ground-truth lists differ in length: {len(preds)} vs {len(gts)}")
    if not gts:
        raise EmptyInputError("r2_multiclass needs at least one image")

    pred_counts = np.array([p.counts for p in preds], dtype=np.float64)
    gt_counts = np.array([g.counts for g in gts], dtype=np.float64)

    per_class = {c: _r2(pred_counts[:, c - 1], gt_counts[:, c - 1]) for c in CLASS_IDS}
    return R2Result(per_class=per_class, mean=_mean(list(per_class.values())))
