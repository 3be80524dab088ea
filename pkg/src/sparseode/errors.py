"""Exception types shared across the package.

ValueError subclasses signal bad inputs or configuration; ArithmeticError
subclasses signal numerical failure of an otherwise well-posed computation.
The CLI maps the former to exit code 3 (data) and the latter to 4 (numerical).
"""


class ConfigurationError(ValueError):
    """Invalid option, grid, or parameter combination."""


class DimensionError(ValueError):
    """Inconsistent array shapes or variable counts."""


class DomainError(ValueError):
    """Value outside the mathematically admissible domain (e.g. negative weight)."""


class TimeRangeError(ValueError):
    """Requested time outside the covered span."""


class DataFormatError(ValueError):
    """Malformed dataset or model file."""


class DivergenceError(ArithmeticError):
    """Numerical integration produced a non-finite state.

    Attributes
    ----------
    time : float
        First time at which a non-finite value appeared.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ConditioningError(ArithmeticError):
    """A linear system was numerically singular; the message names a remedy."""


class NumericalError(ArithmeticError):
    """An iterative routine failed to reach its target (non-convergence, empty bracket)."""


class DegenerateSmootherError(ArithmeticError):
    """The smoother is saturated: tr(I - A) vanished, leaving no residual scale."""


class UndefinedMetricError(ValueError):
    """Metric has no defined value for this input (empty truth set, constant labels)."""
