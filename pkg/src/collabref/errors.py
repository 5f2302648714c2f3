"""Exception types shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for everything this package raises on purpose."""


class TermSyntaxError(EngineError):
    """Raised when term text cannot be parsed."""


class QueryError(EngineError):
    """Raised for queries the belief store cannot interpret."""


class PlanError(EngineError):
    """Raised on malformed plan structures or bad node references."""


class NoPlanError(EngineError):
    """Raised when plan construction exhausts its search space."""


class NotUnderstoodError(EngineError):
    """Raised when an observed utterance admits no usable plan."""


class ScenarioError(EngineError):
    """Raised on malformed scenario files."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
