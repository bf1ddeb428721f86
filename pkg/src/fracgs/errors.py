"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage/config problems -> 2,
iteration failures -> 3, model-regime violations -> 4.
"""


class FracgsError(Exception):
    """Base class for all package errors."""


class RegimeError(FracgsError):
    """Parameters outside the admissible regime (lambda >= lambda_1, q out of range)."""


class NonConvergenceError(FracgsError):
    """An iterative solver hit its cap without meeting its tolerance."""


class PositivityError(FracgsError):
    """Solver kept converging to sign-changing states after all restarts."""


class FoldError(FracgsError):
    """Fold location failed (e.g. sampled maximum sits at an endpoint)."""


class RootRangeError(FracgsError):
    """A normalized-mass root left the sampled branch range."""


class ConfigError(FracgsError):
    """Malformed run configuration (unknown key, bad value)."""


class StateFileError(FracgsError):
    """State document failed validation (version, lengths, non-finite values)."""
