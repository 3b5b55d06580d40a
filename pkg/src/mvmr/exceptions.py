"""Exception types shared across the package."""


class MvmrError(Exception):
    """Base class for all toolkit errors."""


class DataError(MvmrError, ValueError):
    """Malformed or invalid summary data.

    Messages name the offending row and column where known.
    """


class ModelError(MvmrError, ValueError):
    """Design matrix unusable: rank deficient, singular, or too few rows."""


class ConvergenceError(MvmrError, RuntimeError):
    """An iterative solver exhausted its iteration budget."""


class DegeneracyError(MvmrError, ValueError):
    """A resampling or selection step left too little data to proceed."""
