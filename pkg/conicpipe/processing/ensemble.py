# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Multi-scale instance fusion.

Predictions made at several input scales are brought back to the base
resolution and fused by clustering cross-scale instances that overlap
(IoU >= threshold). A cluster survives when enough distinct scales voted for
it; its mask is the pixel-wise majority of its members and its class the
plurality of their classes. A fused instance whose sources all agree on one id
keeps that id, so unanimous inputs come back unchanged.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Final

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as graph_components

from conicpipe.core.config import EnsembleConfig
from conicpipe.core.errors import ConfigurationError, DimensionError, EmptyInputError
from conicpipe.core.types import ClassMap, InstanceMap
from conicpipe.processing.label_maps import (
    assign_instance_classes,
    instance_ids,
    require_same_shape,
    resize_nearest,
    validate_class_map,
    validate_instance_map,
)
from conicpipe.utilities.logger import PipelineLogger, get_logger

_logger: Final[PipelineLogger] = get_logger("ensemble")


@dataclass(frozen=True, slots=True)
class ScaledPrediction:
    """Instance and class maps predicted from the tile resized to scale x scale"""

    scale: int
    instances: InstanceMap
    classes: ClassMap

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ConfigurationError(f"scale must be positive, got {self.scale}")
        validate_instance_map(self.instances)
        validate_class_map(self.classes)
        require_same_shape(self.instances, self.classes, f"prediction at scale {self.scale}")
        if self.instances.shape != (self.scale, self.scale):
            raise DimensionError(f"prediction at scale {self.scale} has maps of shape {self.instances.shape}")


@dataclass(frozen=True, slots=True)
class SourceInstance:
    scale: int
    instance_id: int


@dataclass(frozen=True, slots=True)
class FusedInstance:
    """Provenance of one output instance"""

    instance_id: int
    nucleus_class: int
    pixel_count: int
    sources: tuple[SourceInstance, ...]

    @property
    def scale_votes(self) -> int:
        return len({source.scale for source in self.sources})


@dataclass(frozen=True, slots=True)
class FusionResult:
    instances: InstanceMap
    classes: ClassMap
    provenance: tuple[FusedInstance, ...]


def rescale_prediction(p: ScaledPrediction, base: int) -> ScaledPrediction:
    """Nearest-neighbour resize of both maps to base x base"""
    if base <= 0:
        raise ConfigurationError(f"base size must be positive, got {base}")
    if p.scale == base:
        return p

    instances = resize_nearest(p.instances, base, base)
    classes = resize_nearest(p.classes, base, base)

    lost = np.setdiff1d(instance_ids(p.instances), instance_ids(instances))
    if lost.size:
        _logger.debug(f"Rescaling {p.scale} -> {base} removed {lost.size} instance(s): {lost[:10].tolist()}")

    return ScaledPrediction(scale=base, instances=instances, classes=classes)


# ---------------------------------------------------------------------------
# Fusion internals
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class _Node:
    scale: int
    instance_id: int
    nucleus_class: int
    pixels: NDArray[np.int64]  # flat indices at base resolution


def _pixel_lists(instances: InstanceMap) -> dict[int, NDArray[np.int64]]:
    """Flat pixel indices of every instance, each list ascending"""
    flat = instances.ravel()
    foreground = np.flatnonzero(flat)
    ids = flat[foreground]
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    unique_ids, starts = np.unique(sorted_ids, return_index=True)
    chunks = np.split(foreground[order].astype(np.int64), starts[1:])
    return {int(instance_id): chunk for instance_id, chunk in zip(unique_ids, chunks, strict=True)}


def _collect_nodes(preds: list[ScaledPrediction], original_scales: list[int]) -> list[_Node]:
    nodes: list[_Node] = []
    for pred, scale in zip(preds, original_scales, strict=True):
        pixels = _pixel_lists(pred.instances)
        for record in assign_instance_classes(pred.instances, pred.classes).records:
            nodes.append(
                _Node(
                    scale=scale,
                    instance_id=record.instance_id,
                    nucleus_class=record.nucleus_class,
                    pixels=pixels[record.instance_id],
                )
            )
    return nodes


def _cross_scale_edges(
    preds: list[ScaledPrediction],
    original_scales: list[int],
    node_index: dict[tuple[int, int], int],
    nodes: list[_Node],
    iou_threshold: float,
) -> tuple[list[int], list[int]]:
    """Node pairs from different scales whose IoU reaches the threshold"""
    rows: list[int] = []
    cols: list[int] = []
    flats = [pred.instances.ravel().astype(np.int64) for pred in preds]

    for a in range(len(preds)):
        for b in range(a + 1, len(preds)):
            both = (flats[a] > 0) & (flats[b] > 0)
            if not both.any():
                continue
            pairs, intersections = np.unique(
                np.stack([flats[a][both], flats[b][both]], axis=1), axis=0, return_counts=True
            )
            for (id_a, id_b), intersection in zip(pairs.tolist(), intersections.tolist(), strict=True):
                node_a = node_index.get((original_scales[a], id_a))
                node_b = node_index.get((original_scales[b], id_b))
                if node_a is None or node_b is None:
                    continue
                union = nodes[node_a].pixels.size + nodes[node_b].pixels.size - intersection
                if intersection / union >= iou_threshold:
                    rows.append(node_a)
                    cols.append(node_b)
    return rows, cols


def _plurality(classes: list[int]) -> int:
    tally = Counter(classes)
    best = max(tally.values())
    return min(c for c, n in tally.items() if n == best)


@dataclass(frozen=True, slots=True)
class _Cluster:
    members: tuple[int, ...]  # node indices
    nucleus_class: int
    pixels: NDArray[np.int64]  # majority-mask pixels
    votes: NDArray[np.int64]  # member count covering each pixel


def _final_ids(
    clusters: list[_Cluster], nodes: list[_Node], surviving: list[int], first_pixels: list[int]
) -> NDArray[np.int32]:
    """
    Output id per provisional id (index 0 is background).

    A cluster whose members all carry one source id keeps it unless another
    surviving cluster wants the same id. The others take the smallest free
    ids in row-major order of their first pixel.
    """
    wanted: dict[int, int] = {}
    for provisional_id in surviving:
        source_ids = {nodes[m].instance_id for m in clusters[provisional_id - 1].members}
        if len(source_ids) == 1:
            wanted[provisional_id] = source_ids.pop()
    claims = Counter(wanted.values())

    final_ids = np.zeros(len(clusters) + 1, dtype=np.int32)
    taken: set[int] = set()
    for provisional_id, source_id in wanted.items():
        if claims[source_id] == 1:
            final_ids[provisional_id] = source_id
            taken.add(source_id)

    next_id = 1
    for _, provisional_id in sorted(zip(first_pixels, surviving, strict=True)):
        if final_ids[provisional_id]:
            continue
        while next_id in taken:
            next_id += 1
        final_ids[provisional_id] = next_id
        taken.add(next_id)
    return final_ids


def fuse_detailed(preds: list[ScaledPrediction], cfg: EnsembleConfig) -> FusionResult:
    """
    Fuse multi-scale predictions into one base-resolution prediction.

    The result does not depend on the order of preds. Every scale must be one
    of cfg.scales.
    """
    if not preds:
        raise EmptyInputError("fuse needs at least one prediction")
    scales = [p.scale for p in preds]
    if len(set(scales)) != len(scales):
        raise ConfigurationError(f"prediction scales must be distinct, got {sorted(scales)}")
    unexpected = sorted(set(scales) - set(cfg.scales))
    if unexpected:
        raise ConfigurationError(f"prediction scales {unexpected} are not among the configured {list(cfg.scales)}")

    ordered = sorted(preds, key=lambda p: p.scale)
    original_scales = [p.scale for p in ordered]
    rescaled = [rescale_prediction(p, cfg.base_size) for p in ordered]
    shape = (cfg.base_size, cfg.base_size)

    nodes = _collect_nodes(rescaled, original_scales)
    if not nodes:
        return FusionResult(
            instances=np.zeros(shape, dtype=np.int32), classes=np.zeros(shape, dtype=np.uint8), provenance=()
        )

    node_index = {(node.scale, node.instance_id): i for i, node in enumerate(nodes)}
    rows, cols = _cross_scale_edges(rescaled, original_scales, node_index, nodes, cfg.iou_threshold)
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(len(nodes), len(nodes)))
    _, component_of = graph_components(graph, directed=False)

    members_by_component: dict[int, list[int]] = {}
    for node, component in enumerate(component_of.tolist()):
        members_by_component.setdefault(component, []).append(node)

    clusters: list[_Cluster] = []
    for component in sorted(members_by_component):
        members = members_by_component[component]
        if len({nodes[m].scale for m in members}) < cfg.min_votes:
            continue
        covered, counts = np.unique(np.concatenate([nodes[m].pixels for m in members]), return_counts=True)
        majority = counts >= (len(members) + 1) // 2
        if not majority.any():
            continue
        clusters.append(
            _Cluster(
                members=tuple(members),
                nucleus_class=_plurality([nodes[m].nucleus_class for m in members]),
                pixels=covered[majority],
                votes=counts[majority],
            )
        )

    if not clusters:
        return FusionResult(
            instances=np.zeros(shape, dtype=np.int32), classes=np.zeros(shape, dtype=np.uint8), provenance=()
        )

    # Provisional ids follow the first pixel of each majority mask
    clusters.sort(key=lambda c: int(c.pixels[0]))

    candidate_pixels = np.concatenate([c.pixels for c in clusters])
    candidate_votes = np.concatenate([c.votes for c in clusters])
    candidate_sizes = np.concatenate([np.full(c.pixels.size, len(c.members)) for c in clusters])
    candidate_ids = np.concatenate([np.full(c.pixels.size, i + 1) for i, c in enumerate(clusters)])

    # Contested pixels: more votes wins, then the larger cluster, then the smaller id
    order = np.lexsort((candidate_ids, -candidate_sizes, -candidate_votes, candidate_pixels))
    winning_pixels, first = np.unique(candidate_pixels[order], return_index=True)
    winning_ids = candidate_ids[order][first]

    # winning_pixels is ascending, so each id's first index is its first pixel
    surviving, first_won = np.unique(winning_ids, return_index=True)
    final_ids = _final_ids(clusters, nodes, surviving.tolist(), winning_pixels[first_won].tolist())

    flat_fused = np.zeros(shape[0] * shape[1], dtype=np.int32)
    flat_fused[winning_pixels] = final_ids[winning_ids]
    fused_instances = flat_fused.reshape(shape)

    flat_classes = np.zeros(shape[0] * shape[1], dtype=np.uint8)
    provenance: list[FusedInstance] = []
    for provisional_id, cluster in enumerate(clusters, start=1):
        won = winning_pixels[winning_ids == provisional_id]
        if won.size == 0:
            continue
        final_id = int(final_ids[provisional_id])
        flat_classes[won] = cluster.nucleus_class
        provenance.append(
            FusedInstance(
                instance_id=final_id,
                nucleus_class=cluster.nucleus_class,
                pixel_count=int(won.size),
                sources=tuple(SourceInstance(nodes[m].scale, nodes[m].instance_id) for m in cluster.members),
            )
        )

    provenance.sort(key=lambda f: f.instance_id)
    for fused in provenance:
        _logger.trace(
            f"Fused instance {fused.instance_id} (class {fused.nucleus_class}, {fused.pixel_count} px) "
            f"from {[(s.scale, s.instance_id) for s in fused.sources]}"
        )

    return FusionResult(
        instances=fused_instances, classes=flat_classes.reshape(shape), provenance=tuple(provenance)
    )


def fuse(preds: list[ScaledPrediction], cfg: EnsembleConfig) -> tuple[InstanceMap, ClassMap]:
    result = fuse_detailed(preds, cfg)
    return result.instances, result.classes
