# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

"""
Exception hierarchy for conicpipe.

Everything raised on bad data derives from PipelineError, which the controller
turns into a failed CommandResult (exit code 1). Value-like errors also derive
from ValueError so plain callers can catch them the usual way.
"""


class PipelineError(Exception):
    """Base class for all data and configuration errors"""


class DimensionError(PipelineError, ValueError):
    """Empty arrays, wrong rank, or maps whose shapes disagree"""


class LabelRangeError(PipelineError, ValueError):
    """Label values outside their allowed range (class > 6, negative ids, id > 65535)"""


class UndefinedInputError(PipelineError, ValueError):
    """A quantity is undefined for the given input (e.g. IoU of two empty sets)"""


class EmptyInputError(PipelineError, ValueError):
    """A collection that must be non-empty was empty"""


class ConfigurationError(PipelineError, ValueError):
    """Invalid parameters or an inconsistent combination of options"""


class InsufficientTissueError(PipelineError):
    """Too few pixels above the optical-density floor to estimate stains"""


class DegenerateStainError(PipelineError):
    """Stain estimation produced a rank-deficient or collinear result"""


class ImageFormatError(PipelineError):
    """Unreadable or wrongly-typed PNG file"""


class DatasetError(PipelineError):
    """Manifest problems: duplicate ids, missing files, too few entries"""
