# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from conicpipe.core.constants import (
    DEFAULT_ALPHA,
    DEFAULT_BASE_SIZE,
    DEFAULT_BETA,
    DEFAULT_IO,
    DEFAULT_IOU_THRESHOLD,
    DEFAULT_MAX_C_PERCENTILE,
    DEFAULT_MIN_TISSUE_PIXELS,
    DEFAULT_MIN_VOTES,
    DEFAULT_SCALES,
)
from conicpipe.core.errors import ConfigurationError


@dataclass(frozen=True, slots=True)
class MacenkoParams:
    """Stain estimation parameters (Macenko reference defaults)"""

    io: float = DEFAULT_IO  # transmitted-light intensity
    beta: float = DEFAULT_BETA  # OD floor; pixels with any channel below are discarded
    alpha: float = DEFAULT_ALPHA  # robust angle percentile, in percent
    max_c_percentile: float = DEFAULT_MAX_C_PERCENTILE
    min_tissue_pixels: int = DEFAULT_MIN_TISSUE_PIXELS

    def __post_init__(self) -> None:
        if not self.io > 0:
            raise ConfigurationError(f"io must be positive, got {self.io}")
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        if not 0 < self.alpha < 50:
            raise ConfigurationError(f"alpha must be in (0, 50), got {self.alpha}")
        if not 50 < self.max_c_percentile <= 100:
            raise ConfigurationError(f"max_c_percentile must be in (50, 100], got {self.max_c_percentile}")
        if self.min_tissue_pixels < 1:
            raise ConfigurationError(f"min_tissue_pixels must be >= 1, got {self.min_tissue_pixels}")


@dataclass(frozen=True, slots=True)
class AugmentPolicy:
    """Per-operation probabilities used by sample_spec"""

    p_flip_h: float = 0.5
    p_flip_v: float = 0.5
    p_rotate: float = 0.5  # probability of a non-zero quarter turn (1..3 drawn uniformly)
    p_resize: float = 0.0
    target_sizes: tuple[int, ...] = DEFAULT_SCALES
    p_stain_normalize: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p_flip_h", "p_flip_v", "p_rotate", "p_resize", "p_stain_normalize"):
            value: float = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {value}")
        if not self.target_sizes:
            raise ConfigurationError("target_sizes must not be empty")
        if any(size <= 0 for size in self.target_sizes):
            raise ConfigurationError(f"target_sizes must be positive, got {self.target_sizes}")


@dataclass(frozen=True, slots=True)
class EnsembleConfig:
    """Multi-scale fusion settings"""

    base_size: int = DEFAULT_BASE_SIZE
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    min_votes: int = DEFAULT_MIN_VOTES
    scales: tuple[int, ...] = DEFAULT_SCALES

    def __post_init__(self) -> None:
        if self.base_size <= 0:
            raise ConfigurationError(f"base_size must be positive, got {self.base_size}")
        if not 0 < self.iou_threshold <= 1:
            raise ConfigurationError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if len(set(self.scales)) != len(self.scales):
            raise ConfigurationError(f"scales must be distinct, got {self.scales}")
        if any(scale <= 0 for scale in self.scales):
            raise ConfigurationError(f"scales must be positive, got {self.scales}")
        if not 1 <= self.min_votes <= len(self.scales):
            raise ConfigurationError(f"min_votes must be in [1, {len(self.scales)}], got {self.min_votes}")


@dataclass(frozen=True, slots=True)
class SplitRatios:
    """Relative partition weights; only their proportions matter"""

    train: float
    val: float
    test: float

    def __post_init__(self) -> None:
        for name, value in self.named_weights():
            if not value > 0:
                raise ConfigurationError(f"{name} weight must be positive, got {value}")

    def named_weights(self) -> tuple[tuple[str, float], ...]:
        return (("train", self.train), ("val", self.val), ("test", self.test))

    def exact_weights(self) -> tuple[Fraction, Fraction, Fraction]:
        """Weights as exact rationals of their decimal spelling (0.1 -> 1/10)"""
        return (Fraction(repr(self.train)), Fraction(repr(self.val)), Fraction(repr(self.test)))

    @classmethod
    def parse(cls, text: str) -> SplitRatios:
        """Parse 'a:b:c' into SplitRatios"""
        parts: list[str] = text.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"Ratios must look like 'train:val:test', got '{text}'")
        try:
            train, val, test = (float(part) for part in parts)
        except ValueError as e:
            raise ConfigurationError(f"Ratios must be numeric, got '{text}'") from e
        return cls(train=train, val=val, test=test)

    def __str__(self) -> str:
        return f"{self.train:g}:{self.val:g}:{self.test:g}"


@dataclass(frozen=True, slots=True)
class GlobalConfig:
    """Invocation-wide settings shared by every subcommand"""

    seed: int = 0
    threads: int = 1
    log_level: int = logging.INFO
    output_dir: Path | None = None

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")


class PipelineConfig:
    """Aggregates the per-module parameter groups for one invocation"""


    def __init__(
        self,
        global_config: GlobalConfig | None = None,
        macenko: MacenkoParams | None = None,
        augment_policy: AugmentPolicy | None = None,
        ensemble: EnsembleConfig | None = None,
    ) -> None:
        self._global: GlobalConfig = global_config or GlobalConfig()
        self._macenko: MacenkoParams = macenko or MacenkoParams()
        self._augment_policy: AugmentPolicy = augment_policy or AugmentPolicy()
        self._ensemble: EnsembleConfig = ensemble or EnsembleConfig()

    @property
    def global_config(self) -> GlobalConfig:
        return self._global

    @property
    def macenko(self) -> MacenkoParams:
        return self._macenko

    @property
    def augment_policy(self) -> AugmentPolicy:
        return self._augment_policy

    @property
    def ensemble(self) -> EnsembleConfig:
        return self._ensemble

