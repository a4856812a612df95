"""Exception types raised across the package."""


class StreamTuneError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(StreamTuneError, ValueError):
    """A stream configuration is outside the limits of a workload."""


class InvalidGridError(StreamTuneError, ValueError):
    """A configuration grid is empty or lacks the (1, 1) baseline."""


class InsufficientDataError(StreamTuneError, ValueError):
    pass


class DegenerateDatasetError(StreamTuneError, ValueError):
    """Training data has fewer than two distinct labels."""


class ConvergenceError(StreamTuneError, RuntimeError):
    pass


class InputError(StreamTuneError, ValueError):
    """A query vector does not match the model it is fed to."""


class InvalidArgumentError(StreamTuneError, ValueError):
    pass


class SingularFitError(StreamTuneError, ValueError):
    pass


class InvalidCoefficientsError(StreamTuneError, ValueError):
    pass


class NoSolutionError(StreamTuneError, ValueError):
    pass


class CorpusParseError(StreamTuneError, ValueError):
    """A corpus or workload file is malformed.

    The message carries the line (for JSON syntax errors) or the offending
    field path (for schema errors).
    """
