"""Source positions and diagnostics for the textual languages."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


@dataclass(frozen=True)
class SourceSpan:
    """A 1-based (line, column) position with a character length."""

    file: str
    line: int
    column: int
    length: int = 1

    def __post_init__(self):
        if self.line < 1 or self.column < 1:
            raise ValueError("spans are 1-based")


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    """One parser or validator finding with a stable code.

    Rendered as ``file:line:col: severity[CODE] message`` so editors and
    scripts can jump to the offending location.
    """

    severity: Severity
    span: SourceSpan
    code: str
    message: str

    def render(self) -> str:
        s = self.span
        return f"{s.file}:{s.line}:{s.column}: {self.severity.value}[{self.code}] {self.message}"

    def to_json(self) -> dict:
        return {
            "file": self.span.file,
            "line": self.span.line,
            "column": self.span.column,
            "severity": self.severity.value,
            "code": self.code,
            "message": self.message,
        }


def error(span: SourceSpan, code: str, message: str) -> Diagnostic:
    return Diagnostic(Severity.ERROR, span, code, message)


def warning(span: SourceSpan, code: str, message: str) -> Diagnostic:
    return Diagnostic(Severity.WARNING, span, code, message)


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.severity is Severity.ERROR for d in diagnostics)
