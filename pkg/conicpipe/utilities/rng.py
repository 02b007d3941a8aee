# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Counter-based random streams.

Every random draw in the pipeline comes from a Philox generator keyed on
(seed, stream, index), so the draws for sample i never depend on which worker
handled sample i - 1 or in what order samples finished.
"""

import numpy as np

from conicpipe.core.errors import ConfigurationError

# Stream tags keep unrelated consumers of the same seed apart
STREAM_AUGMENT = 1
STREAM_SPLIT = 2


def keyed_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream, index)"""
    if seed < 0 or stream < 0 or index < 0:
        raise ConfigurationError(f"seed, stream and index must be non-negative, got ({seed}, {stream}, {index})")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream, index])))


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for per-sample augmentation draws"""
    return keyed_rng(seed, STREAM_AUGMENT, index)
