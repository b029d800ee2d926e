"""Exception hierarchy shared by the simulator modules."""


class LfgadmmError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(LfgadmmError, ValueError):
    pass


class ShapeError(LfgadmmError, ValueError):
    pass


class UsageError(LfgadmmError, ValueError):
    pass


class StateCorruptionError(LfgadmmError):
    """Worker caches or duals no longer match the parameter layout."""


class SchedulingError(LfgadmmError):
    """A layer-wise operation was invoked on an iteration where it is not due."""


class FormatError(LfgadmmError, ValueError):
    pass


class ConsistencyError(LfgadmmError, ValueError):
    pass


class ModelError(LfgadmmError):
    """The channel model cannot produce a finite cost."""


class DataError(LfgadmmError, KeyError):
    pass


class AlignmentError(LfgadmmError, ValueError):
    pass


class DivergenceError(LfgadmmError, FloatingPointError):
    """Training produced a non-finite loss or parameter."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
