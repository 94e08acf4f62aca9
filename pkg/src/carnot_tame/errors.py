"""Exception hierarchy shared across the package."""


class CarnotError(Exception):
    """Base class for every error raised by carnot_tame."""


class SkewSymmetryViolation(CarnotError, ValueError):
    pass


class LinearDependence(CarnotError, ValueError):
    pass


class DimensionMismatch(CarnotError, ValueError):
    pass


class NonpositiveScale(CarnotError, ValueError):
    pass


class InvalidParameter(CarnotError, ValueError):
    pass


class EvaluationFailure(CarnotError, ArithmeticError):
    """A field could not be evaluated at one of the finite-difference probes."""


class OriginSingularity(CarnotError, ArithmeticError):
    """Derivatives requested at a point where the field is singular (p = 0 or x = 0)."""


class OuterSingularity(CarnotError, ArithmeticError):
    """The outer function V is not twice differentiable at the requested argument."""


class EmptySample(CarnotError, ValueError):
    pass


class BudgetTooSmall(CarnotError, ValueError):
    pass


class NonIntegrable(CarnotError, ArithmeticError):
    """Monte Carlo evidence that the partition function diverges."""

    def __init__(self, message, estimates=None):
        super().__init__(message)
        self.estimates = estimates


class UnknownFamily(CarnotError, KeyError):
    pass


class StartOnSingularSet(CarnotError, ValueError):
    pass


class NonfiniteEnergy(CarnotError, ArithmeticError):
    pass


class GridTooCoarse(CarnotError, ValueError):
    pass


class MemoryBudgetExceeded(CarnotError, MemoryError):
    pass


class NoConvergence(CarnotError, RuntimeError):
    pass


class ConfigError(CarnotError):
    pass


class ParseError(ConfigError, ValueError):
    pass


class ValidationError(ConfigError, ValueError):
    """Invalid configuration; ``key_path`` names the offending key(s)."""

    def __init__(self, message, key_path=()):
        if isinstance(key_path, str):
            key_path = (key_path,)
        self.key_path = tuple(key_path)
        if self.key_path:
            message = f"{', '.join(self.key_path)}: {message}"
        super().__init__(message)
