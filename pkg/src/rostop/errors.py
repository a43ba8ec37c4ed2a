"""Exception types shared across the toolkit."""


class RostopError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(RostopError, ValueError):
    """An input value violates a documented precondition."""


class ConfigError(RostopError):
    """A configuration is inconsistent or incomplete (bad key, missing data)."""


class EnumerationCapError(RostopError):
    """Exhaustive enumeration refused because the candidate count exceeds the cap."""


class RegressionError(RostopError):
    """Least-squares fit failed even after the ridge fallback."""


class BudgetExhaustedError(RostopError):
    """Pipeline budget ran out before any work completed.

    Carries the partial report assembled so far (may be empty).
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
