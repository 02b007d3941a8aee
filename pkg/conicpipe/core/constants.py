# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

# conicpipe - CoNIC nuclei pipeline

"""
Pipeline constants.
"""

from typing import Final

from conicpipe.core.types import NucleusClass

# Class vocabulary
NUM_CLASSES: Final[int] = 6
MAX_CLASS_ID: Final[int] = 6
CLASS_IDS: Final[tuple[int, ...]] = tuple(int(c) for c in NucleusClass)
CLASS_NAMES: Final[dict[int, str]] = {int(c): c.label for c in NucleusClass}

# Label map storage limits
MAX_INSTANCE_ID: Final[int] = 65535  # 16-bit PNG

# Challenge dataset shape (patch-level release)
DATASET_TILE_COUNT: Final[int] = 4981

# Ensemble input scales (square side lengths)
DEFAULT_BASE_SIZE: Final[int] = 256
DEFAULT_SCALES: Final[tuple[int, ...]] = (256, 512, 800, 1024, 1152)
DEFAULT_IOU_THRESHOLD: Final[float] = 0.5
DEFAULT_MIN_VOTES: Final[int] = 3

# Macenko reference defaults
DEFAULT_IO: Final[float] = 255.0
DEFAULT_BETA: Final[float] = 0.15
DEFAULT_ALPHA: Final[float] = 1.0
DEFAULT_MAX_C_PERCENTILE: Final[float] = 99.0
DEFAULT_MIN_TISSUE_PIXELS: Final[int] = 100
MIN_STAIN_ANGLE_DEGREES: Final[float] = 1.0
UNIT_NORM_TOLERANCE: Final[float] = 1e-6

# Matching
MIN_MATCH_THRESHOLD: Final[float] = 0.5

# Split
DEFAULT_SPLIT_RATIOS: Final[str] = "4:1:0.1"

# File layout
INSTANCE_SUFFIX: Final[str] = "_instances.png"
CLASS_SUFFIX: Final[str] = "_classes.png"
IMAGE_SUFFIX: Final[str] = ".png"
RUN_MANIFEST_NAME: Final[str] = "run_manifest.json"

# Environment
THREADS_ENV_VAR: Final[str] = "CONICPIPE_THREADS"

# Exit codes
EXIT_OK: Final[int] = 0
EXIT_DATA_ERROR: Final[int] = 1
EXIT_USAGE_ERROR: Final[int] = 2
