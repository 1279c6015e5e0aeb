"""Exception types shared across the package.

Everything raised on purpose derives from WindscaleError so callers (and the
CLI) can catch one base class. The subclasses split failures by what went
wrong, not by where: array rank/channel problems are ShapeError, grid factor
and multiple-of-8 problems are AlignmentError, out-of-range indices or domains
too small to operate on are BoundsError, bad user-supplied configuration is
ConfigurationError, and non-finite or otherwise numerically unusable values
are NumericError.
"""


class WindscaleError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(WindscaleError):
    """An array has the wrong rank, channel count, or per-axis size."""


class AlignmentError(WindscaleError):
    """A size or offset violates a required multiple (grid factor, crop alignment)."""


class BoundsError(WindscaleError):
    """An index or window falls outside the valid domain, or the domain is too small."""


class ConfigurationError(WindscaleError):
    """A config value or combination of values is invalid."""


class NumericError(WindscaleError):
    """A computation produced or received non-finite / degenerate values."""
