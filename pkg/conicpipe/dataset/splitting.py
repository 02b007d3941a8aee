# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Stratified train/val/test split.

Partition sizes follow the ratio weights with largest-remainder rounding.
Samples are then visited in a seeded random order and each goes to the
partition (with room left) whose per-class nucleus totals end up closest, in
L1 distance, to that partition's share of the global totals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Final

import numpy as np

from conicpipe.core.config import SplitRatios
from conicpipe.core.constants import CLASS_IDS
from conicpipe.core.errors import DatasetError
from conicpipe.core.types import Partition
from conicpipe.dataset.manifest import Manifest, make_manifest
from conicpipe.processing.label_maps import Composition
from conicpipe.utilities.logger import PipelineLogger, get_logger
from conicpipe.utilities.rng import STREAM_SPLIT, keyed_rng

_logger: Final[PipelineLogger] = get_logger("splitting")

PARTITIONS: Final[tuple[Partition, ...]] = (Partition.TRAIN, Partition.VAL, Partition.TEST)


def _shares(ratios: SplitRatios) -> list[Fraction]:
    weights = ratios.exact_weights()
    total = sum(weights, Fraction(0))
    return [w / total for w in weights]


def target_sizes(n: int, ratios: SplitRatios) -> tuple[int, int, int]:
    """
    Largest-remainder apportionment of n samples; equal remainders favour the
    earlier partition (train, then val, then test).
    """
    if n < 0:
        raise DatasetError(f"sample count must be non-negative, got {n}")
    quotas = [n * share for share in _shares(ratios)]
    sizes = [math.floor(q) for q in quotas]
    leftover = n - sum(sizes)
    by_remainder = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in by_remainder[:leftover]:
        sizes[i] += 1
    return sizes[0], sizes[1], sizes[2]


def stratified_split(m: Manifest, r: SplitRatios, seed: int) -> tuple[Manifest, Manifest, Manifest]:
    """
    Split a manifest into (train, val, test).

    Deterministic for a given (manifest, ratios, seed). Output manifests keep
    the input order of their entries.
    """
    n = len(m)
    if n < len(PARTITIONS):
        raise DatasetError(f"need at least {len(PARTITIONS)} entries to split, got {n}")

    caps = target_sizes(n, r)
    if 0 in caps:
        _logger.warning(f"Ratios {r} leave a partition empty for {n} entries: sizes {caps}")

    # Everything is scaled by the common denominator of the shares so the
    # distance comparisons are exact integer arithmetic
    shares = _shares(r)
    scale = math.lcm(*(share.denominator for share in shares))
    share_units = np.array([int(share * scale) for share in shares], dtype=np.int64)

    counts = np.array([entry.composition for entry in m.entries], dtype=np.int64)
    targets = np.outer(share_units, counts.sum(axis=0))
    running = np.zeros_like(targets)
    sizes = [0, 0, 0]
    assignment = np.full(n, -1, dtype=np.int64)

    order = keyed_rng(seed, STREAM_SPLIT).permutation(n)
    for index in order.tolist():
        scaled = counts[index] * scale
        best: tuple[int, Fraction, int] | None = None
        for p in range(len(PARTITIONS)):
            if sizes[p] >= caps[p]:
                continue
            before = int(np.abs(running[p] - targets[p]).sum())
            after = int(np.abs(running[p] + scaled - targets[p]).sum())
            # Smaller gap change first, then the emptiest partition, then the earlier one
            key = (after - before, -Fraction(caps[p] - sizes[p], caps[p]), p)
            if best is None or key < best:
                best = key
        assert best is not None
        chosen = best[2]
        running[chosen] += scaled
        sizes[chosen] += 1
        assignment[index] = chosen

    parts = tuple(
        make_manifest(entry for entry, part in zip(m.entries, assignment.tolist(), strict=True) if part == p)
        for p in range(len(PARTITIONS))
    )
    _logger.info(f"Split {n} entries into {' / '.join(str(len(part)) for part in parts)} (seed {seed})")
    return parts[0], parts[1], parts[2]


@dataclass(frozen=True, slots=True)
class PartitionBalance:
    partition: Partition
    size: int
    target_size: int
    totals: Composition
    target_totals: tuple[float, ...]  # this partition's share of the global per-class totals
    relative_deviation: tuple[float | None, ...]  # (actual - target) / target, None where target is 0


def balance_report(parts: tuple[Manifest, Manifest, Manifest], r: SplitRatios) -> tuple[PartitionBalance, ...]:
    """Per-partition class totals against their proportional targets"""
    n = sum(len(part) for part in parts)
    caps = target_sizes(n, r)
    global_totals = Composition.zeros()
    for part in parts:
        global_totals = global_totals + part.total_composition

    report: list[PartitionBalance] = []
    for partition, part, share, cap in zip(PARTITIONS, parts, _shares(r), caps, strict=True):
        totals = part.total_composition
        target = tuple(float(share * global_totals.count(c)) for c in CLASS_IDS)
        deviation = tuple(
            (totals.count(c) - t) / t if t > 0 else None for c, t in zip(CLASS_IDS, target, strict=True)
        )
        report.append(
            PartitionBalance(
                partition=partition,
                size=len(part),
                target_size=cap,
                totals=totals,
                target_totals=target,
                relative_deviation=deviation,
            )
        )
    return tuple(report)
