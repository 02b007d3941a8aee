# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

# conicpipe - CoNIC nuclei pipeline

from enum import Enum, IntEnum
from typing import TypeAlias

import numpy as np
from numpy.typing import NDArray

# pylint: disable=c0103
# H x W x 3, uint8 (float arrays are accepted where a function says so)
RgbImage: TypeAlias = NDArray[np.uint8]
# H x W instance ids, 0 = background
InstanceMap: TypeAlias = NDArray[np.integer]
# H x W class ids in 0..6, 0 = background
ClassMap: TypeAlias = NDArray[np.integer]
# H x W boolean foreground mask
BinaryMask: TypeAlias = NDArray[np.bool_]
# H x W x 3 optical densities
OpticalDensityMap: TypeAlias = NDArray[np.float64]

# (min_x, min_y, max_x, max_y), inclusive
BoundingBox: TypeAlias = tuple[int, int, int, int]


class NucleusClass(IntEnum):
    """
    Integer coding of the six nuclei classes.

    Order follows the challenge description listing; 0 is reserved for background.
    """

    EPITHELIAL = 1
    LYMPHOCYTE = 2
    PLASMA = 3
    EOSINOPHIL = 4
    NEUTROPHIL = 5
    CONNECTIVE = 6

    @property
    def label(self) -> str:
        return self.name.lower()


class Partition(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class Subcommand(Enum):
    NORMALIZE = "normalize"
    SPLIT = "split"
    AUGMENT = "augment"
    ENSEMBLE = "ensemble"
    EVALUATE = "evaluate"
    COUNT = "count"
