"""Exception hierarchy.

Errors fall into three families that the CLI maps to exit codes:
parse/contract problems, numerical failures, and I/O.
"""


class DualGLMError(Exception):
    """Base class for every error raised by this package."""


class StructuralViolationError(DualGLMError, ValueError):
    """Input violates a structural invariant (malformed measure, length mismatch)."""


class NormalizationUndefinedError(DualGLMError, ValueError):
    pass


class BoundaryDivergenceError(DualGLMError, ValueError):
    """A link was evaluated at p in {0, 1}, where it diverges."""


class LinkDomainError(DualGLMError, ValueError):
    pass


class InsufficientDataError(DualGLMError, ValueError):
    pass


class CannotExtendError(DualGLMError, ValueError):
    pass


class DataParseError(DualGLMError, ValueError):
    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        prefix = f"{', '.join(loc)}: " if loc else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


class ConfigError(DualGLMError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class ComparisonInvalidError(DualGLMError, ValueError):
    pass


class NumericalFailure(DualGLMError, ArithmeticError):
    """Base for failures of a numerical procedure on valid input."""


class SingularDesignError(NumericalFailure):
    pass


class SeparationSuspectedError(NumericalFailure):
    """The likelihood has no finite maximiser; carries the diagnostic report."""

    def __init__(self, message, report, beta=None, iterations=None):
        super().__init__(message)
        self.report = report
        self.beta = beta
        self.iterations = iterations


class CalibrationInfeasibleError(NumericalFailure):
    def __init__(self, message, side):
        super().__init__(f"{side} side: {message}")
        self.side = side


class CalibrationPreconditionError(NumericalFailure, ValueError):
    """Exponent calibration requested at a boundary probability."""


class NewtonFailureError(NumericalFailure):
    pass
