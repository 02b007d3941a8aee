# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Macenko stain normalization for H&E tiles.

Stains combine linearly in optical-density space (OD = S . C): the stain matrix S
is estimated from the angular extremes of the tissue pixels projected onto their
dominant OD plane, and a tile is normalized by rescaling its concentrations C to
a reference model's maxima and recomposing with the reference stain matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Final

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from conicpipe.core.config import MacenkoParams
from conicpipe.core.constants import MIN_STAIN_ANGLE_DEGREES, UNIT_NORM_TOLERANCE
from conicpipe.core.errors import (
    DegenerateStainError,
    DimensionError,
    ImageFormatError,
    InsufficientTissueError,
)
from conicpipe.core.types import OpticalDensityMap, RgbImage
from conicpipe.utilities.atomic_io import atomic_write_text
from conicpipe.utilities.logger import PipelineLogger, get_logger

_logger: Final[PipelineLogger] = get_logger("stain_norm")

# Percentiles use the inverted CDF so that the estimate depends only on the
# multiset of pixel values (duplicating pixels changes nothing).
_PERCENTILE_METHOD: Final = "inverted_cdf"

# Relative size of the second eigenvalue below which the OD cloud is treated as rank < 2
_RANK_TOLERANCE: Final[float] = 1e-10


@dataclass(frozen=True, slots=True)
class StainModel:
    """
    3x2 stain matrix (columns H, E as unit OD vectors, rows R, G, B) and the
    per-stain maximum concentrations used for scaling.
    """

    stain_matrix: NDArray[np.float64]
    max_concentrations: NDArray[np.float64]

    def __post_init__(self) -> None:
        matrix = np.array(self.stain_matrix, dtype=np.float64)
        maxima = np.array(self.max_concentrations, dtype=np.float64).ravel()
        object.__setattr__(self, "stain_matrix", matrix)
        object.__setattr__(self, "max_concentrations", maxima)

        if matrix.shape != (3, 2):
            raise DimensionError(f"stain matrix must be 3x2, got {matrix.shape}")
        if maxima.shape != (2,):
            raise DimensionError(f"max_concentrations must hold 2 values, got {maxima.shape}")
        if not np.all(np.isfinite(matrix)) or not np.all(np.isfinite(maxima)):
            raise DegenerateStainError("stain model contains non-finite values")
        if np.any(matrix < 0):
            raise DegenerateStainError(f"stain matrix entries must be non-negative:\n{matrix}")
        norms = np.linalg.norm(matrix, axis=0)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOLERANCE):
            raise DegenerateStainError(f"stain columns must be unit length, got norms {norms}")
        if np.any(maxima <= 0):
            raise DegenerateStainError(f"max concentrations must be positive, got {maxima}")
        if self.angle_between_stains_degrees() <= MIN_STAIN_ANGLE_DEGREES:
            raise DegenerateStainError(
                f"H and E vectors are collinear ({self.angle_between_stains_degrees():.3f} degrees apart)"
            )

    @property
    def hematoxylin(self) -> NDArray[np.float64]:
        return self.stain_matrix[:, 0]

    @property
    def eosin(self) -> NDArray[np.float64]:
        return self.stain_matrix[:, 1]

    def angle_between_stains_degrees(self) -> float:
        return angle_degrees(self.stain_matrix[:, 0], self.stain_matrix[:, 1])


@dataclass(frozen=True, slots=True)
class ConcentrationMap:
    """H x W x 2 non-negative stain concentrations (H, E)"""

    values: NDArray[np.float64]

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def hematoxylin(self) -> NDArray[np.float64]:
        return self.values[..., 0]

    @property
    def eosin(self) -> NDArray[np.float64]:
        return self.values[..., 1]


def angle_degrees(first: NDArray[np.float64], second: NDArray[np.float64]) -> float:
    cosine = float(np.dot(first, second) / (np.linalg.norm(first) * np.linalg.norm(second)))
    return math.degrees(math.acos(min(1.0, max(-1.0, cosine))))


# ---------------------------------------------------------------------------
# Optical density
# ---------------------------------------------------------------------------


def rgb_to_od(img: NDArray[np.generic], io: float) -> OpticalDensityMap:
    """
    OD = -log10(max(I, 1) / io), per pixel and channel.

    Accepts 8-bit images or real-valued intensities of the same layout.
    """
    if img.ndim != 3 or img.shape[-1] != 3:
        raise DimensionError(f"expected H x W x 3 intensities, got shape {img.shape}")
    intensity = np.maximum(img.astype(np.float64), 1.0)
    return -np.log10(intensity / io)


def od_to_rgb(od: NDArray[np.float64], io: float) -> RgbImage:
    """I = io * 10^(-OD), clamped to [0, 255] and rounded to the nearest level"""
    intensity = io * np.power(10.0, -od)
    return np.rint(np.clip(intensity, 0.0, 255.0)).astype(np.uint8)


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------


def _orient_non_negative(vector: NDArray[np.float64]) -> NDArray[np.float64]:
    oriented = -vector if vector.sum() < 0 else vector
    oriented = np.clip(oriented, 0.0, None)
    norm = float(np.linalg.norm(oriented))
    if norm == 0.0:
        raise DegenerateStainError(f"stain direction {vector} has no non-negative component")
    return oriented / norm


def _solve_concentrations(od_pixels: NDArray[np.float64], stain_matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    """Per-pixel least squares of OD on the stain matrix, clamped at 0; returns N x 2"""
    solution, *_ = np.linalg.lstsq(stain_matrix, od_pixels.T, rcond=None)
    return np.clip(solution.T, 0.0, None)


def _max_concentrations(concentrations: NDArray[np.float64], percentile: float) -> NDArray[np.float64]:
    return np.percentile(concentrations, percentile, axis=0, method=_PERCENTILE_METHOD)


def estimate_stain_matrix(img: NDArray[np.generic], p: MacenkoParams) -> NDArray[np.float64]:
    """Macenko stain vectors (3x2, columns H then E) for one tile"""
    if img.ndim != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise DimensionError(f"cannot estimate stains from an image of shape {img.shape}")

    od = rgb_to_od(img, p.io).reshape(-1, 3)
    tissue = od[np.all(od >= p.beta, axis=1)]
    if tissue.shape[0] < p.min_tissue_pixels:
        raise InsufficientTissueError(
            f"only {tissue.shape[0]} pixels above OD floor {p.beta}, need {p.min_tissue_pixels}"
        )

    # Population covariance: a pixel-multiset statistic
    covariance = np.cov(tissue, rowvar=False, bias=True)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    if eigenvalues[2] <= 0 or eigenvalues[1] <= _RANK_TOLERANCE * eigenvalues[2]:
        raise DegenerateStainError(f"OD covariance has rank < 2 (eigenvalues {eigenvalues})")

    # Plane of the two largest eigenvalues; first axis points into the positive octant
    plane = eigenvectors[:, [2, 1]]
    if plane[:, 0].sum() < 0:
        plane[:, 0] = -plane[:, 0]
    if plane[0, 1] < 0:
        plane[:, 1] = -plane[:, 1]

    projected = tissue @ plane
    angles = np.arctan2(projected[:, 1], projected[:, 0])
    low_angle, high_angle = np.percentile(angles, [p.alpha, 100.0 - p.alpha], method=_PERCENTILE_METHOD)

    first = _orient_non_negative(plane @ np.array([math.cos(low_angle), math.sin(low_angle)]))
    second = _orient_non_negative(plane @ np.array([math.cos(high_angle), math.sin(high_angle)]))

    # Hematoxylin is the vector with the larger red-channel OD
    if first[0] >= second[0]:
        hematoxylin, eosin = first, second
    else:
        hematoxylin, eosin = second, first

    if angle_degrees(hematoxylin, eosin) <= MIN_STAIN_ANGLE_DEGREES:
        raise DegenerateStainError("estimated H and E directions are collinear")

    return np.column_stack([hematoxylin, eosin])


def estimate_stain_model(img: NDArray[np.generic], p: MacenkoParams) -> StainModel:
    """
    Estimate the stain matrix and maximum concentrations of a tile.

    Raises InsufficientTissueError for blank tiles and DegenerateStainError when
    the OD cloud does not span two stain directions.
    """
    stain_matrix = estimate_stain_matrix(img, p)
    od = rgb_to_od(img, p.io).reshape(-1, 3)
    concentrations = _solve_concentrations(od, stain_matrix)
    maxima = _max_concentrations(concentrations, p.max_c_percentile)
    if np.any(maxima <= 0):
        raise DegenerateStainError(f"a stain is absent from the tile (max concentrations {maxima})")

    model = StainModel(stain_matrix=stain_matrix, max_concentrations=maxima)
    _logger.debug(
        f"Estimated stain model: H={np.round(model.hematoxylin, 4)}, E={np.round(model.eosin, 4)}, "
        f"max C={np.round(maxima, 4)}"
    )
    return model


def compute_concentrations(img: NDArray[np.generic], model: StainModel, p: MacenkoParams) -> ConcentrationMap:
    """Solve OD = S . C per pixel (least squares, clamped at zero)"""
    od = rgb_to_od(img, p.io)
    height, width = od.shape[:2]
    concentrations = _solve_concentrations(od.reshape(-1, 3), model.stain_matrix)
    return ConcentrationMap(values=concentrations.reshape(height, width, 2))


def normalize_to_reference(img: NDArray[np.generic], p: MacenkoParams, reference: StainModel) -> RgbImage:
    """
    Re-render a tile with the reference stain matrix and concentration scale.

    Estimation errors on the source tile propagate to the caller.
    """
    source = estimate_stain_model(img, p)
    concentrations = compute_concentrations(img, source, p).values
    scaled = concentrations * (reference.max_concentrations / source.max_concentrations)
    od = scaled @ reference.stain_matrix.T
    return od_to_rgb(od, p.io)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


class StainModelFile(BaseModel):
    """On-disk JSON layout of a StainModel"""

    model_config = ConfigDict(extra="forbid")

    # RGB rows x (H, E) columns
    stain_matrix: list[Annotated[list[float], Field(min_length=2, max_length=2)]] = Field(min_length=3, max_length=3)
    max_concentrations: list[float] = Field(min_length=2, max_length=2)

    @classmethod
    def from_model(cls, model: StainModel) -> StainModelFile:
        return cls(
            stain_matrix=[[float(v) for v in row] for row in model.stain_matrix],
            max_concentrations=[float(v) for v in model.max_concentrations],
        )

    def to_model(self) -> StainModel:
        return StainModel(
            stain_matrix=np.array(self.stain_matrix, dtype=np.float64),
            max_concentrations=np.array(self.max_concentrations, dtype=np.float64),
        )


def save_stain_model(model: StainModel, path: Path) -> None:
    atomic_write_text(path, StainModelFile.from_model(model).model_dump_json(indent=2) + "\n")


def load_stain_model(path: Path) -> StainModel:
    try:
        text: str = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ImageFormatError(f"cannot read stain model {path}: {e}") from e
    try:
        stored = StainModelFile.model_validate_json(text)
    except ValidationError as e:
        raise ImageFormatError(f"invalid stain model {path}: {e}") from e
    return stored.to_model()
