"""Exception types shared by the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to reach its accuracy target.

    ``error_estimate`` carries the achieved error estimate when one exists.
    """

    def __init__(self, message: str, error_estimate: float | None = None):
        super().__init__(message)
        self.error_estimate = error_estimate


class EstimationError(RuntimeError):
    """An estimation stage could not produce an estimate.

    ``stage`` names the pipeline stage (e.g. ``"power-moments"``) and
    ``diagnostics`` holds whatever the stage recorded before failing.
    """

    def __init__(self, message: str, stage: str = "", diagnostics: dict | None = None):
        super().__init__(f"[{stage}] {message}" if stage else message)
        self.stage = stage
        self.diagnostics = dict(diagnostics or {})


class ParseError(ValueError):
    """Malformed input data; ``line`` is the 1-based offending line, if known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line
