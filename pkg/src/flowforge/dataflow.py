"""The per-instance variable space activities exchange information through.

A DataFlow is a stack of frames: one base frame plus one frame per
active loop. Reads resolve innermost-first; writing an existing name
updates the frame that owns it, while new names bind in the innermost
frame. Values are immutable, so writing into a nested record path
rebuilds the spine and rebinds the root variable.
"""

from __future__ import annotations

import json
from typing import Callable, Iterator, Optional

from .errors import CorruptImageError, DataflowError
from .values import (
    CollectionVal,
    RecordVal,
    Value,
    canonical_json,
    kind_name,
    value_from_json,
    value_to_json,
)

Path = tuple[str, ...]


def _null_read(path: Path) -> DataflowError:
    return DataflowError(f"no value at '{'.'.join(path)}'", code="E_NULL_READ")


class DataFlow:
    """Frame-scoped variable -> value store with dotted-path access."""

    def __init__(self, initial: Optional[dict[str, Value]] = None):
        self._frames: list[dict[str, Value]] = [dict(initial or {})]
        self.on_read: Optional[Callable[[str], None]] = None
        self.on_write: Optional[Callable[[str], None]] = None

    # -- frame management ---------------------------------------------------

    @property
    def depth(self) -> int:
        return len(self._frames)

    def push_frame(self, bindings: dict[str, Value]) -> None:
        self._frames.append(dict(bindings))

    def pop_frame(self) -> None:
        if len(self._frames) == 1:
            raise DataflowError("cannot pop the base frame", code="E_POP_BASE")
        self._frames.pop()

    def rebind_frame(self, bindings: dict[str, Value]) -> None:
        """Replace the innermost frame's contents (fresh loop iteration)."""
        if len(self._frames) == 1:
            raise DataflowError("cannot rebind the base frame", code="E_POP_BASE")
        self._frames[-1] = dict(bindings)

    def _owning_frame(self, name: str) -> Optional[dict[str, Value]]:
        for frame in reversed(self._frames):
            if name in frame:
                return frame
        return None

    # -- reads ----------------------------------------------------------------

    def has(self, name: str) -> bool:
        return self._owning_frame(name) is not None

    def names(self) -> set[str]:
        out: set[str] = set()
        for frame in self._frames:
            out.update(frame)
        return out

    def read(self, path: Path) -> Value:
        if not path:
            raise ValueError("empty path")
        frame = self._owning_frame(path[0])
        if frame is None:
            raise _null_read(path[:1])
        if self.on_read:
            self.on_read(path[0])
        value = frame[path[0]]
        for i, attr in enumerate(path[1:], start=1):
            if not isinstance(value, RecordVal):
                raise DataflowError(
                    f"'{'.'.join(path[:i])}' is {kind_name(value)}, cannot descend"
                    f" into attribute '{attr}'",
                    code="E_NOT_A_RECORD",
                )
            if attr not in value.attrs:
                raise _null_read(path[: i + 1])
            value = value.attrs[attr]
        return value

    # -- writes ---------------------------------------------------------------

    def write(self, path: Path, value: Value) -> None:
        """Write a value at a dotted path.

        The root variable keeps its kind for the lifetime of the
        instance: overwriting with a different kind is E_TYPE_MISMATCH.
        Nested writes require every intermediate record to exist.
        """
        if not path:
            raise ValueError("empty path")
        name = path[0]
        frame = self._owning_frame(name)
        if len(path) == 1:
            if frame is not None and kind_name(frame[name]) != kind_name(value):
                raise DataflowError(
                    f"variable '{name}' is {kind_name(frame[name])};"
                    f" cannot store {kind_name(value)}",
                    code="E_TYPE_MISMATCH",
                )
            target = frame if frame is not None else self._frames[-1]
            target[name] = value
        else:
            if frame is None:
                raise _null_read(path[:1])
            frame[name] = _write_nested(frame[name], path, 1, value)
        if self.on_write:
            self.on_write(name)

    def bind(self, name: str, value: Value) -> None:
        """Bind a name in the innermost frame, shadowing outer frames."""
        self._frames[-1][name] = value
        if self.on_write:
            self.on_write(name)

    def bind_is_new(self, name: str) -> bool:
        return name not in self._frames[-1]

    def remove(self, name: str) -> Value:
        frame = self._owning_frame(name)
        if frame is None:
            raise _null_read((name,))
        return frame.pop(name)

    def rename(self, old: str, new: str) -> None:
        """Move a binding to a new name within its owning frame."""
        frame = self._owning_frame(old)
        if frame is None:
            raise _null_read((old,))
        if new in frame:
            raise DataflowError(
                f"cannot rename '{old}' to '{new}': name already bound",
                code="E_RENAME_TARGET_EXISTS",
            )
        frame[new] = frame.pop(old)
        if self.on_write:
            self.on_write(new)

    # -- snapshots --------------------------------------------------------------

    def snapshot(self) -> bytes:
        """Canonical JSON image of all frames; equal states give equal bytes."""
        image = {
            "frames": [
                {name: value_to_json(v) for name, v in frame.items()}
                for frame in self._frames
            ]
        }
        return canonical_json(image).encode("utf-8")

    def snapshot_obj(self) -> dict:
        return json.loads(self.snapshot().decode("utf-8"))

    @staticmethod
    def restore(image: bytes | dict) -> "DataFlow":
        try:
            obj = json.loads(image.decode("utf-8")) if isinstance(image, (bytes, bytearray)) else image
            frames = obj["frames"]
            if not isinstance(frames, list) or not frames:
                raise ValueError("image needs at least the base frame")
            df = DataFlow()
            df._frames = [
                {str(name): value_from_json(v) for name, v in frame.items()}
                for frame in frames
            ]
            return df
        except (ValueError, KeyError, TypeError, AttributeError, UnicodeDecodeError) as exc:
            raise CorruptImageError(f"cannot restore data-flow image: {exc}") from exc

    # -- misc ---------------------------------------------------------------------

    def items(self) -> Iterator[tuple[str, Value]]:
        seen: set[str] = set()
        for frame in reversed(self._frames):
            for name, value in frame.items():
                if name not in seen:
                    seen.add(name)
                    yield name, value

    def __eq__(self, other) -> bool:
        if not isinstance(other, DataFlow):
            return NotImplemented
        return self._frames == other._frames

    def __repr__(self) -> str:
        return f"DataFlow(depth={self.depth}, names={sorted(self.names())})"


def _write_nested(value: Value, path: Path, i: int, new: Value) -> Value:
    if i == len(path):
        if kind_name(value) != kind_name(new):
            raise DataflowError(
                f"'{'.'.join(path)}' is {kind_name(value)}; cannot store {kind_name(new)}",
                code="E_TYPE_MISMATCH",
            )
        return new
    if not isinstance(value, RecordVal):
        raise DataflowError(
            f"'{'.'.join(path[:i])}' is {kind_name(value)}, cannot descend"
            f" into attribute '{path[i]}'",
            code="E_NOT_A_RECORD",
        )
    attr = path[i]
    if attr not in value.attrs:
        raise _null_read(path[: i + 1])
    attrs = dict(value.attrs)
    attrs[attr] = _write_nested(attrs[attr], path, i + 1, new)
    return RecordVal(value.type_name, attrs, value.entity_id)


def append_to_collection(df: DataFlow, path: Path, item: Value) -> None:
    """Append an element to a collection at path (homogeneity enforced)."""
    try:
        current = df.read(path)
    except DataflowError as exc:
        if exc.code == "E_NULL_READ":
            raise DataflowError(
                f"'{'.'.join(path)}' is not a set (not bound)", code="E_APPEND_NOT_SET"
            ) from exc
        raise
    if not isinstance(current, CollectionVal):
        raise DataflowError(
            f"'{'.'.join(path)}' is {kind_name(current)}, not a set",
            code="E_APPEND_NOT_SET",
        )
    try:
        grown = CollectionVal(current.items + (item,))
    except ValueError as exc:
        raise DataflowError(str(exc), code="E_TYPE_MISMATCH") from exc
    df.write(path, grown)  # root kind stays COLLECTION, so write() accepts it
