"""Exception hierarchy shared by all modules."""


class PolarSturmError(Exception):
    """Base class for library errors."""


class ConfigError(PolarSturmError, ValueError):
    """Input data is malformed or violates a stated precondition."""


class NumericalError(PolarSturmError, RuntimeError):
    """A computation could not reach its accuracy or structure guarantees."""


class SymplecticityError(NumericalError):
    pass


class RefinementError(NumericalError):
    """Angle lifting could not get the step displacement below the limit."""


class BracketError(NumericalError):
    pass


class BoundaryDegenerateError(NumericalError):
    """A crossing sits (numerically) on the end of the requested range."""
