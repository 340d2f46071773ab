"""Shared diagnostic record and error types."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    location: str = ""

    def as_record(self) -> dict:
        return {
            "severity": self.severity,
            "code": self.code,
            "message": self.message,
            "location": self.location,
        }

    def __str__(self) -> str:
        where = f" [{self.location}]" if self.location else ""
        return f"{self.severity}: {self.code}: {self.message}{where}"


def error(code: str, message: str, location: str = "") -> Diagnostic:
    return Diagnostic("error", code, message, location)


def warning(code: str, message: str, location: str = "") -> Diagnostic:
    return Diagnostic("warning", code, message, location)


def has_errors(diags: Iterable[Diagnostic]) -> bool:
    return any(d.severity == "error" for d in diags)


class LabelSyntaxError(ValueError):
    def __init__(self, message: str, field_index: int | None = None):
        super().__init__(message)
        self.field_index = field_index


class TranscriptError(ValueError):
    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass
class ValidationError(ValueError):
    """Raised with the full list of findings that made an input unusable."""

    message: str
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def __post_init__(self):
        super().__init__(self.message)

    def __str__(self) -> str:
        lines = [self.message] + [f"  {d}" for d in self.diagnostics]
        return "\n".join(lines)


class LedgerError(ValueError):
    pass


class MachineConfigError(ValueError):
    pass
