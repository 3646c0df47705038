"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An argument is outside the domain an operation accepts."""


class PreconditionViolation(ValueError):
    """Input data does not satisfy a documented precondition."""


class NumericFailure(ArithmeticError):
    """A computation produced, or would produce, non-finite values."""


class UndefinedMetric(ValueError):
    """A statistic is undefined for the given data (empty class, constant input)."""


class DegenerateStimulus(ValueError):
    """A stimulus rendered to nothing usable (e.g. an empty silhouette)."""
