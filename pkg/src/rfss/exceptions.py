"""Exception types raised across the package."""


class RFSSError(Exception):
    """Base class for all package errors."""


class StructuralError(RFSSError, ValueError):
    """A skeleton is malformed or a node id does not exist."""


class ParameterError(RFSSError, ValueError):
    """A numeric parameter is outside its admissible range."""


class DomainError(RFSSError, TypeError):
    """An input value or parameter does not belong to the expected space."""


class UnsupportedSpaceError(RFSSError, TypeError):
    """Raised when an operation needs a finite parameter space."""


class UsageError(RFSSError, ValueError):
    """Objects from incompatible registries or models were combined."""


class ConvergenceError(RFSSError, RuntimeError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    diagnostics : dict
        Final objective, gradient norm and iteration count.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
