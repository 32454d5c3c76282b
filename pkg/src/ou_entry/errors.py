"""Exception hierarchy shared by the solvers and the CLI."""


class OUEntryError(Exception):
    """Base class for all package errors."""


class ValidationError(OUEntryError, ValueError):
    """Invalid parameters or configuration.

    ``fields`` lists the offending field names when known.
    """

    def __init__(self, message, fields=None):
        super().__init__(message)
        self.fields = list(fields or [])


class UnsupportedRegimeError(OUEntryError):
    """Raised when a solver is asked to work in the unsolved regime 0 <= c_hat <= 1."""


class BracketError(OUEntryError):
    """No sign change could be found for a bracketed root search."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class QuadratureError(OUEntryError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, error_estimate=float("nan")):
        super().__init__(message)
        self.error_estimate = error_estimate


class ConsistencyError(OUEntryError):
    """A computed quantity violates a property that must hold by construction."""


class ConvergenceError(OUEntryError):
    """An iterative solver did not converge."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class MultipleRootsError(OUEntryError):
    """A free-boundary equation that should have a unique root has several."""

    def __init__(self, message, roots):
        super().__init__(message)
        self.roots = list(roots)
