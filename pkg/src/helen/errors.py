"""Exception hierarchy shared across the package."""


class HelenError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(HelenError):
    """Invalid configuration (bad field value, unknown key, inconsistent sizes)."""


class DataError(HelenError):
    """Invalid or corrupt data (file format, shape mismatch, NaN/Inf payload)."""


class NumericalError(HelenError):
    """Non-finite value encountered during optimization.

    Carries the offending iterate in ``iterate`` when available.
    """

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate
