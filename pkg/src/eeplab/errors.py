"""Exception types shared across the package."""


class EeplabError(Exception):
    """Base class for all package errors."""


class ValidationError(EeplabError, ValueError):
    """Invalid inputs: bad shapes, non-positive prices, inconsistent parameters."""


class NotPositiveDefiniteError(ValidationError):
    """Covariance matrix failed the positive-definiteness check."""


class UnsupportedDimensionError(ValidationError):
    """Grid-based solver asked for more assets than it supports."""


class SolverFailureError(EeplabError, RuntimeError):
    """Iterative solver (PSOR or penalty Newton) did not converge."""


class OracleInvalidError(EeplabError, ValueError):
    """Finite-difference oracle refused: query point too close to a kink surface."""


class ExtrapolationError(EeplabError, ValueError):
    """Surface queried outside its grid bounds."""


class ConfigError(EeplabError, ValueError):
    """Run-config document failed parsing or validation.

    The message starts with the dotted field path of the offending entry,
    e.g. ``model.d: expected length 2, got 3``.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class PipelineError(EeplabError, RuntimeError):
    """A decomposition stage failed; the message names the stage."""
