# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
conicpipe - the non-neural half of a CoNIC nuclei pipeline.

Stain normalization, stratified splitting, label-preserving augmentation,
multi-scale instance fusion and the challenge metrics (mPQ, mPQ+, R^2).
"""

__version__ = "0.1.0"
BUILD_ID = f"conicpipe {__version__}"
