"""Typed errors shared across the package.

ConfigError covers bad user input (malformed files, invalid parameters) and
maps to CLI exit code 2.  NumericalError covers failures of the numerical
machinery itself (degenerate denominators, non-convergence) and maps to exit
code 3.
"""


class TrimcoreError(Exception):
    """Base class for all package errors."""


class ConfigError(TrimcoreError):
    """Invalid configuration, arguments, or input files."""


class DataFormatError(ConfigError):
    """A dataset, coreset, or op-log file does not match its format."""


class NumericalError(TrimcoreError):
    """A numerical routine failed (degenerate input or non-convergence)."""


class DegenerateBallError(NumericalError):
    """The parameter ball is too large for a bound to stay positive.

    Raised when f(theta~, X) - [[X]] * xi(ell) <= 0 (sensitivity closed form)
    or when the ratio denominator can vanish inside the ball (QFP path).
    Shrinking the ball radius resolves it.
    """


class NonConvergenceError(NumericalError):
    """An iterative routine exhausted its iteration budget."""
