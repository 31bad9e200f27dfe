"""Exception types raised by the simulation and validation routines."""


class ErgodicMlmcError(Exception):
    """Base class for all package errors."""


class NonFiniteEvaluation(ErgodicMlmcError, ValueError):
    """A drift, diffusion or timestep function returned NaN or inf on a grid point."""


class NonFiniteState(ErgodicMlmcError, FloatingPointError):
    """A simulated state became NaN or inf.

    ``level`` and ``sample_index`` locate the failing path when known.
    """

    def __init__(self, message, level=None, sample_index=None):
        super().__init__(message)
        self.level = level
        self.sample_index = sample_index


class MissingJacobian(ErgodicMlmcError, ValueError):
    pass


class OutOfRange(ErgodicMlmcError, ValueError):
    pass


class ScheduleTooShort(ErgodicMlmcError, ValueError):
    pass


class DegenerateVariance(ErgodicMlmcError, ValueError):
    pass


class MaxLevelExceeded(ErgodicMlmcError, RuntimeError):
    pass


class NotScalar(ErgodicMlmcError, ValueError):
    pass


class NonIntegrable(ErgodicMlmcError, ValueError):
    pass


class NonPositiveValue(ErgodicMlmcError, ValueError):
    pass


class DegenerateFit(ErgodicMlmcError, ValueError):
    pass


class ConfigError(ErgodicMlmcError, ValueError):
    """Malformed or unknown configuration input."""
