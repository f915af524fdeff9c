"""Exception types raised by the spikelane package."""


class SpikeLaneError(Exception):
    """Base class for all spikelane errors."""


class ShapeError(SpikeLaneError):
    """An array argument has the wrong shape."""


class NumericError(SpikeLaneError):
    """A value that must be finite is NaN or infinite."""


class UsageError(SpikeLaneError):
    """An operation was called with inconsistent or empty arguments."""


class ConfigError(SpikeLaneError):
    """A configuration value is out of its allowed range."""


class ParseError(SpikeLaneError):
    """An input file could not be parsed; message carries the line number."""


class CheckpointError(SpikeLaneError):
    """A checkpoint blob is corrupt or has an unsupported layout."""


class DivergenceError(SpikeLaneError):
    """Training produced a non-finite loss."""


class DegenerateFeatureError(SpikeLaneError):
    """A feature column has zero variance and cannot be normalized."""


class DegenerateLabelsError(SpikeLaneError):
    """A binary metric was asked for labels that are all one class."""


class SplitError(SpikeLaneError):
    """A dataset split cannot be formed (too few vehicles)."""
