"""Exception hierarchy shared by every layer of the toolchain.

Every error carries a stable machine-readable ``code`` (the same codes
surface in validator diagnostics, engine fault records, and HTTP error
bodies) plus an optional ``details`` mapping for structured context.
"""

from __future__ import annotations

from typing import Any


class FlowforgeError(Exception):
    """Base class for all coded errors."""

    code = "E_INTERNAL"

    def __init__(self, message: str, *, code: str | None = None, **details: Any):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.details = details

    @property
    def message(self) -> str:
        return str(self)


class ModelError(FlowforgeError):
    """Structural problem in an in-memory model."""


class UnknownTypeError(ModelError):
    code = "E_UNKNOWN_TYPE"

    def __init__(self, name: str):
        super().__init__(f"unknown type '{name}'", name=name)


class NotFoundError(ModelError):
    code = "E_NOT_FOUND"

    def __init__(self, kind: str, name: str):
        super().__init__(f"no {kind} named '{name}'", kind=kind, name=name)


class DataflowError(FlowforgeError):
    """Runtime data-flow access failure (absent path, type clash, ...)."""


class EvalError(FlowforgeError):
    """Expression evaluation failure."""


class ScriptError(FlowforgeError):
    """Script statement execution failure."""


class StoreError(FlowforgeError):
    """Document store failure."""


class InvokeError(FlowforgeError):
    """Service invocation failure."""


class EngineError(FlowforgeError):
    """Flow engine failure (also used for resume/lifecycle misuse)."""


class CorruptImageError(FlowforgeError):
    """A persisted snapshot or instance image could not be decoded."""

    code = "E_CORRUPT_IMAGE"
