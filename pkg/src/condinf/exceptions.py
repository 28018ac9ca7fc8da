"""Exception hierarchy shared by all modules."""


class CondInfError(Exception):
    """Base class for every error raised by :mod:`condinf`."""


class NumericalError(CondInfError):
    """A numerical routine could not produce a trustworthy value."""


class NoSignChange(NumericalError):
    pass


class MaxIterations(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class OutOfDomain(NumericalError):
    """A tilt parameter lies outside the domain of the moment generating function."""


class AlphaOutOfRange(NumericalError):
    """A conditioning mean lies outside the interior of the statistic's range.

    Attributes
    ----------
    step : int or None
        Index of the chain step at which the value left the range, when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EnvelopeViolated(NumericalError):
    pass


class NewtonDiverged(NumericalError):
    pass


class NuisanceMleFailed(CondInfError):
    pass


class FlatProfile(CondInfError):
    pass


class ConfigError(CondInfError):
    """Invalid experiment configuration; raised before any computation starts."""
