"""Exception types raised across the package."""


class SteinShrinkError(Exception):
    """Base class for package errors."""


class DimensionMismatchError(SteinShrinkError, ValueError):
    pass


class MissingResidualError(SteinShrinkError, ValueError):
    """An unknown-scale estimator was called without usable residual information."""


class DegenerateDensityError(SteinShrinkError, ArithmeticError):
    """The radial density underflowed, so Q(t) = F(t)/f(t) is undefined."""


class NonfiniteMomentError(SteinShrinkError, ValueError):
    pass


class InfiniteExpectationError(SteinShrinkError, ValueError):
    pass


class QuadratureError(SteinShrinkError, ArithmeticError):
    pass


class ParameterDomainError(SteinShrinkError, ValueError):
    pass


class ConfigError(SteinShrinkError, ValueError):
    """Raised with every validation problem found in an experiment config."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
