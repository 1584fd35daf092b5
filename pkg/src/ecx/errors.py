"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class EcxError(Exception):
    """Base class for all package errors."""


class ValidationError(EcxError, ValueError):
    """Inputs violate a documented precondition (CLI exit code 1)."""


class DimensionError(ValidationError):
    """Array shapes or sizes are incompatible."""


class EmptyInputError(ValidationError):
    """A matrix carries no mass (all zeros)."""


class NotCoveredError(ValidationError):
    """Configuration outside the closed-form results."""


class NumericalError(EcxError, ArithmeticError):
    """A solver failed or produced an unusable result (CLI exit code 2)."""
