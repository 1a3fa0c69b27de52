"""Exception hierarchy shared by all modules.

Each class carries the CLI exit code it maps to.
"""


class PolaronScatterError(Exception):
    exit_code = 1


class ParameterError(PolaronScatterError, ValueError):
    """Invalid user-supplied parameter (bad length, cutoff, tolerance...)."""

    exit_code = 2


class DomainError(ParameterError):
    """Input outside the mathematical domain of a formula."""


class DegenerateInputError(ParameterError):
    """Input is valid in type but carries no usable content (e.g. zero coupling)."""


class ConvergenceError(PolaronScatterError):
    exit_code = 3

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class AccuracyError(PolaronScatterError):
    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SingularityError(AccuracyError):
    """Evaluation at (or numerically on top of) a pole or singular matrix."""


class ResourceError(PolaronScatterError):
    exit_code = 5


class AccuracyWarning(UserWarning):
    pass
