"""Exception hierarchy.

Input/config problems derive from ``InputError`` (CLI exit code 2); numerical
failures derive from ``NumericalError`` (CLI exit code 3).
"""


class OTGuideError(Exception):
    pass


class InputError(OTGuideError, ValueError):
    """Malformed or inconsistent input."""


class ShapeError(InputError):
    pass


class DomainError(InputError):
    """Argument outside the domain of the function (negative mass, zero norm...)."""


class CapabilityError(InputError):
    """Request falls outside what a deliberately narrow routine supports."""


class ConfigError(InputError):
    pass


class NumericalError(OTGuideError, ArithmeticError):
    pass


class GradientSingularityError(NumericalError):
    """Geodesic distance gradient requested at (near-)collinear vectors."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(NumericalError):
    def __init__(self, message, iterations_used=None):
        super().__init__(message)
        self.iterations_used = iterations_used
