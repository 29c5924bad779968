"""
errors.py — Exception hierarchy and diagnostic records shared by all modules.

Operations that *check* something (validate_model, validate_graph, declared
demand checks) return lists of Diagnostic. Operations that *compute*
something raise one of the exceptions below when their inputs are unusable.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict


class SpeError(Exception):
    """Base class for every error raised by the toolkit."""


class ModelError(SpeError, ValueError):
    """A design-model document is structurally or semantically unusable."""


class ModelSyntaxError(ModelError):
    """The document text is not well-formed; carries the 1-based position."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class GraphError(SpeError, ValueError):
    """An execution graph cannot be derived or solved."""


class NetworkError(SpeError, ValueError):
    """A queueing network cannot be built, modified or solved."""


class SaturationError(NetworkError):
    """An open workload drives a queueing center to utilization >= 1."""

    def __init__(self, center: str, utilization: float, max_arrival_rate: float) -> None:
        super().__init__(
            f"center {center!r} is saturated (utilization {utilization:.4g}); "
            f"maximum stable arrival rate is {max_arrival_rate:.6g}"
        )
        self.center = center
        self.utilization = utilization
        self.max_arrival_rate = max_arrival_rate


class PipelineError(SpeError):
    """A pipeline step failed; `step` is the 1-based process step number."""

    def __init__(self, step: int, message: str) -> None:
        super().__init__(f"step {step}: {message}")
        self.step = step


class Diagnostic(BaseModel):
    """One finding of a validator."""

    model_config = ConfigDict(frozen=True)

    severity: Literal["error", "warning"]
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.location}: {self.message}"


def errors_only(diagnostics: list[Diagnostic]) -> list[Diagnostic]:
    """Keep the error-severity diagnostics."""
    return [d for d in diagnostics if d.severity == "error"]
