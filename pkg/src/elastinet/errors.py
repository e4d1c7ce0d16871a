"""Exception hierarchy shared across the package.

The three top-level families map onto the CLI exit codes:
ConfigError -> 2, DataError -> 3, NumericalError -> 4.
"""


class ElastinetError(Exception):
    """Base class for all package errors."""


class ConfigError(ElastinetError):
    """Bad user-supplied configuration (flags, weights, protocol bounds)."""


class DataError(ElastinetError):
    """Bad or inconsistent input data (series, datasets, model documents)."""


class NumericalError(ElastinetError):
    """Numerical failure at runtime (non-SPD input, divergence, ...)."""


class InvalidKinematicsError(NumericalError):
    """Deformation gradient not orientation-preserving / not invertible."""


class SpectralDomainError(NumericalError):
    """Matrix function argument outside its spectral domain (e.g. log of non-SPD)."""


class DegenerateAxisError(NumericalError):
    """Rotation axis has zero length."""


class BasisError(ConfigError):
    """Crystal basis vectors degenerate (coplanar / zero volume)."""


class ProtocolError(ConfigError):
    """Loading-path request outside the supported strain protocol bounds."""


class WindowError(DataError):
    """Filter window incompatible with the series length."""


class DatasetError(DataError):
    """Dataset assembly impossible (e.g. no input series)."""


class ModelFormatError(DataError):
    """Model/dataset document malformed, truncated, or of unsupported version."""


class ToleranceError(NumericalError):
    """Series / iteration failed to converge to the requested tolerance."""


class RangeError(NumericalError):
    """Requested state not bracketed by the scanned path."""


class TrainingDivergedError(NumericalError):
    """Loss became non-finite during training; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
