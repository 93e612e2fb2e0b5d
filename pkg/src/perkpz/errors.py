"""Exception hierarchy shared by all modules."""


class PerKPZError(Exception):
    """Base class for toolkit errors."""


class DomainError(PerKPZError, ValueError):
    """An argument lies outside the domain of the function."""


class ConvergenceError(PerKPZError, ArithmeticError):
    """A series or quadrature did not reach the requested tolerance."""


class SingularityError(PerKPZError, ZeroDivisionError):
    """A denominator vanished (or nearly vanished) where it must not."""


class RangeError(PerKPZError, OverflowError):
    """An exponent is too large to evaluate in double precision."""


class IllConditionedError(PerKPZError, ArithmeticError):
    """A ratio has a denominator that is not resolved above its error proxy."""


class NumericalQualityError(PerKPZError, ArithmeticError):
    """A result carries an error proxy above the accepted threshold."""
