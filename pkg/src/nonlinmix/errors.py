"""Exception hierarchy shared by every module.

CLI exit codes key off the two top-level families: ``InputError`` maps to 2,
``NumericalError`` to 3.
"""


class NonlinmixError(Exception):
    """Base class for all package errors."""


class InputError(NonlinmixError, ValueError):
    """Malformed or out-of-contract input (bad shapes, bad parameters, parse failures)."""


class ParameterError(InputError):
    pass


class DimensionError(InputError):
    pass


class DomainError(InputError):
    """A value lies outside the domain of a nonlinearity."""

    def __init__(self, message, feature=None):
        super().__init__(message)
        self.feature = feature


class StructureError(InputError):
    """A matrix lacks a structural property (rank, incoherence, affine dimension)."""


class PreconditionError(StructureError):
    pass


class InvariantError(InputError):
    """Network parameters violate the positivity invariant."""


class ParseError(InputError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class NumericalError(NonlinmixError, ArithmeticError):
    """Non-finite values or breakdown during iteration."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class SolverFailure(NumericalError):
    """Every start of a multi-start fit failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
