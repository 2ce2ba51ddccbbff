"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SafeOCOError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SafeOCOError, ValueError):
    """Argument has the wrong shape, range or type."""


class DataError(SafeOCOError, ValueError):
    """Input data is non-finite, missing, duplicated or too short."""


class ParseError(DataError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigurationError(SafeOCOError, ValueError):
    """Run configuration is inconsistent (e.g. exploration longer than horizon)."""


class InfeasibleError(SafeOCOError):
    """No strictly feasible point exists for the requested set."""

    def __init__(self, message: str, best_slack: float) -> None:
        self.best_slack = best_slack
        super().__init__(f"{message} (best slack {best_slack:.3e})")


class ConvergenceError(SafeOCOError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message: str, diagnostics: dict | None = None) -> None:
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class AggregationError(SafeOCOError):
    """Traces cannot be combined (mismatched checkpoint schedules)."""


class OutputExistsError(SafeOCOError):
    """An output file already exists and overwriting was not requested."""
