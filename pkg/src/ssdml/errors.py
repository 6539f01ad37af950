"""Exception types shared across the package.

The CLI maps ``SsdmlError`` (and subclasses) to exit code 2; argparse usage
problems exit with 1.
"""


class SsdmlError(Exception):
    """Base class for data, configuration and numerical failures."""


class DataFormatError(SsdmlError):
    """Malformed input file (ragged CSV, bad IDX magic, truncated payload)."""


class ConfigError(SsdmlError):
    """Invalid parameter combination (odd k, k >= n, no labeled rows, ...)."""


class NumericalError(SsdmlError):
    """Numerical failure (singular solve, rank-deficient retraction, NaN loss)."""


class ConvergenceError(NumericalError):
    """Iteration budget exhausted before reaching the requested tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
