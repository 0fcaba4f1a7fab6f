"""Exception hierarchy shared by every module."""


class FGRewardError(Exception):
    """Base class for all package errors."""


class ValidationError(FGRewardError, ValueError):
    """Input violates a documented precondition.

    ``path`` names the offending field (``criteria[2].weight``) when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class StructuralError(FGRewardError, ValueError):
    """Shapes or lengths do not line up."""


class ConfigurationError(FGRewardError, ValueError):
    """A configuration cannot be satisfied (unreachable tier, zero-width range...)."""


class NumericError(FGRewardError, ArithmeticError):
    """NaN or infinite values where finite ones are required."""


class ParseError(FGRewardError, ValueError):
    """A file could not be parsed. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatVersionError(FGRewardError):
    """A file was written by an incompatible format version."""


class UndefinedCorrelationError(FGRewardError, ValueError):
    """Correlation requested for a constant vector."""


class TrainingDiverged(FGRewardError, RuntimeError):
    """Loss became non-finite. ``state`` holds the last finite training state."""

    def __init__(self, message, state=None):
        self.state = state
        super().__init__(message)
