"""Exception types shared across the package."""


class GfoesError(Exception):
    """Base class for all package errors."""


class ShapeError(GfoesError, ValueError):
    pass


class InvalidLabelError(GfoesError, ValueError):
    pass


class EmptyInputError(GfoesError, ValueError):
    pass


class InvalidSplitError(GfoesError, ValueError):
    pass


class InsufficientSamplesError(GfoesError, ValueError):
    pass


class ConfigError(GfoesError, ValueError):
    pass


class NumericError(GfoesError, ArithmeticError):
    """A loss or gradient became non-finite."""


class GfnAbort(NumericError):
    """Raised when generator training hits a non-finite value.

    Carries the iteration index and the trace recorded so far.
    """

    def __init__(self, message, iteration, trace):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
        self.trace = trace


class ZeroGlanceViolation(GfoesError, RuntimeError):
    """Forgotten-class data reached an unlearning operation."""
