"""
Exception hierarchy for netchemo.

Every error carries the CLI exit code it maps to, so the front end never has to
guess: 1 for validation failures, 2 for bad arguments or configuration, 3 for
numerical failures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional


class NetchemoError(Exception):
    """Base class for all netchemo errors."""

    exit_code = 1


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    subject: Optional[str] = None

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "subject": self.subject}


class NetworkValidationError(NetchemoError, ValueError):
    """Raised when a network document violates one or more invariants."""

    exit_code = 1

    def __init__(self, violations: Iterable[Violation]):
        self.violations: List[Violation] = list(violations)
        summary = ", ".join(sorted({v.code for v in self.violations}))
        super().__init__(f"Invalid network ({summary})")

    @property
    def codes(self) -> List[str]:
        return [v.code for v in self.violations]


class ConfigError(NetchemoError, ValueError):
    """Malformed run configuration or initial data."""

    exit_code = 2


class NumericalError(NetchemoError, RuntimeError):
    exit_code = 3


class CFLViolation(NumericalError):
    pass


class SolverBreakdown(NumericalError):
    pass


class StabilityViolation(NumericalError):
    pass
