"""Runtime values: the seven basic kinds plus records and collections.

Values are immutable dataclasses; any "update" builds a new value. The
JSON forms defined here are canonical (sorted keys, compact separators)
so equal values always serialize to identical bytes, which the engine
relies on for snapshot comparison.

Two encodings exist:

* snapshot form — every value is a ``{"$kind": ...}`` object; fully
  self-describing, used for data-flow snapshots and instance images.
* wire form — basic values are bare JSON (dates as ISO-8601 strings,
  locations as ``{"lat","lon"}``, images as media type + base64 bytes),
  records are plain objects, collections plain arrays. Decoding wire
  data therefore needs an expected type; see ``codec``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Union

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class BasicType(Enum):
    STRING = "STRING"
    INTEGER = "INTEGER"
    FLOAT = "FLOAT"
    BOOLEAN = "BOOLEAN"
    DATE = "DATE"
    LOCATION = "LOCATION"
    IMAGE = "IMAGE"


BASIC_TYPE_NAMES = frozenset(m.value for m in BasicType)


@dataclass(frozen=True)
class StringVal:
    value: str


@dataclass(frozen=True)
class IntVal:
    value: int

    def __post_init__(self):
        if not (INT64_MIN <= self.value <= INT64_MAX):
            raise ValueError(f"integer out of 64-bit range: {self.value}")


@dataclass(frozen=True)
class FloatVal:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("float values must be finite")


@dataclass(frozen=True)
class BoolVal:
    value: bool


@dataclass(frozen=True)
class DateVal:
    """UTC instant with millisecond precision, stored as epoch millis."""

    epoch_ms: int


@dataclass(frozen=True)
class LocationVal:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class ImageVal:
    """Media type plus a content-addressed reference; bytes live in a blob store."""

    media_type: str
    ref: str


@dataclass(frozen=True)
class RecordVal:
    """Instance of a declared complex type.

    ``entity_id`` is set on records that came from (or were written to)
    the document store; it is what makes retrieve-modify-store updates
    hit the same document.
    """

    type_name: str
    attrs: dict[str, "Value"] = field(default_factory=dict)
    entity_id: int | None = None


@dataclass(frozen=True)
class CollectionVal:
    items: tuple["Value", ...] = ()

    def __post_init__(self):
        shapes = {_shape(v) for v in self.items}
        if len(shapes) > 1:
            raise ValueError(f"collection is not homogeneous: {sorted(shapes)}")


Value = Union[
    StringVal,
    IntVal,
    FloatVal,
    BoolVal,
    DateVal,
    LocationVal,
    ImageVal,
    RecordVal,
    CollectionVal,
]

_BASIC_OF = {
    StringVal: BasicType.STRING,
    IntVal: BasicType.INTEGER,
    FloatVal: BasicType.FLOAT,
    BoolVal: BasicType.BOOLEAN,
    DateVal: BasicType.DATE,
    LocationVal: BasicType.LOCATION,
    ImageVal: BasicType.IMAGE,
}


def _shape(v: Value) -> str:
    if isinstance(v, RecordVal):
        return f"record:{v.type_name}"
    if isinstance(v, CollectionVal):
        return "collection"
    return _BASIC_OF[type(v)].value


def basic_type_of(v: Value) -> BasicType | None:
    """The basic kind of a value, or None for records/collections."""
    return _BASIC_OF.get(type(v))


def kind_name(v: Value) -> str:
    if isinstance(v, RecordVal):
        return "RECORD"
    if isinstance(v, CollectionVal):
        return "COLLECTION"
    return _BASIC_OF[type(v)].value


def coerce(v: Value, expected: BasicType) -> Value:
    """Check a value against an expected basic kind.

    The single implicit conversion is INTEGER -> FLOAT; everything else
    must match exactly. Raises ValueError on mismatch.
    """
    actual = basic_type_of(v)
    if actual is expected:
        return v
    if expected is BasicType.FLOAT and isinstance(v, IntVal):
        return FloatVal(float(v.value))
    raise ValueError(f"expected {expected.value}, got {kind_name(v)}")


# ---------------------------------------------------------------------------
# dates

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MS = timedelta(milliseconds=1)


def parse_instant(text: str) -> int:
    """Parse an ISO-8601 instant to epoch milliseconds.

    Accepts a bare date (midnight UTC), 'Z' or numeric offsets, and
    truncates sub-millisecond precision.
    """
    t = text.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return (dt - _EPOCH) // _MS


def format_instant(epoch_ms: int) -> str:
    """Canonical ISO-8601 form: UTC, exactly three fractional digits."""
    dt = _EPOCH + epoch_ms * _MS
    return (f"{dt.year:04d}-{dt.month:02d}-{dt.day:02d}"
            f"T{dt.hour:02d}:{dt.minute:02d}:{dt.second:02d}"
            f".{dt.microsecond // 1000:03d}Z")


def date_value(text: str) -> DateVal:
    return DateVal(parse_instant(text))


# ---------------------------------------------------------------------------
# canonical JSON and the snapshot encoding

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)


def value_to_json(v: Value) -> dict:
    """Snapshot form: self-describing object with a ``$kind`` discriminator."""
    if isinstance(v, StringVal):
        return {"$kind": "STRING", "value": v.value}
    if isinstance(v, IntVal):
        return {"$kind": "INTEGER", "value": v.value}
    if isinstance(v, FloatVal):
        return {"$kind": "FLOAT", "value": v.value}
    if isinstance(v, BoolVal):
        return {"$kind": "BOOLEAN", "value": v.value}
    if isinstance(v, DateVal):
        return {"$kind": "DATE", "value": format_instant(v.epoch_ms)}
    if isinstance(v, LocationVal):
        return {"$kind": "LOCATION", "value": {"lat": v.lat, "lon": v.lon}}
    if isinstance(v, ImageVal):
        return {"$kind": "IMAGE", "value": {"mediaType": v.media_type, "ref": v.ref}}
    if isinstance(v, RecordVal):
        return {
            "$kind": "RECORD",
            "type": v.type_name,
            "id": v.entity_id,
            "attrs": {k: value_to_json(a) for k, a in v.attrs.items()},
        }
    if isinstance(v, CollectionVal):
        return {"$kind": "COLLECTION", "items": [value_to_json(i) for i in v.items]}
    raise TypeError(f"not a value: {v!r}")


def value_from_json(obj) -> Value:
    """Inverse of value_to_json. Raises ValueError on malformed input."""
    if not isinstance(obj, dict) or "$kind" not in obj:
        raise ValueError(f"not a value object: {obj!r}")
    kind = obj["$kind"]
    try:
        if kind == "STRING":
            v = obj["value"]
            if not isinstance(v, str):
                raise ValueError("STRING payload must be a string")
            return StringVal(v)
        if kind == "INTEGER":
            v = obj["value"]
            if not isinstance(v, int) or isinstance(v, bool):
                raise ValueError("INTEGER payload must be an int")
            return IntVal(v)
        if kind == "FLOAT":
            v = obj["value"]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValueError("FLOAT payload must be a number")
            return FloatVal(float(v))
        if kind == "BOOLEAN":
            v = obj["value"]
            if not isinstance(v, bool):
                raise ValueError("BOOLEAN payload must be a bool")
            return BoolVal(v)
        if kind == "DATE":
            return DateVal(parse_instant(obj["value"]))
        if kind == "LOCATION":
            p = obj["value"]
            return LocationVal(float(p["lat"]), float(p["lon"]))
        if kind == "IMAGE":
            p = obj["value"]
            return ImageVal(str(p["mediaType"]), str(p["ref"]))
        if kind == "RECORD":
            attrs = obj["attrs"]
            if not isinstance(attrs, dict):
                raise ValueError("RECORD attrs must be an object")
            eid = obj.get("id")
            if eid is not None and (not isinstance(eid, int) or isinstance(eid, bool)):
                raise ValueError("RECORD id must be an int or null")
            return RecordVal(
                str(obj["type"]),
                {k: value_from_json(a) for k, a in attrs.items()},
                eid,
            )
        if kind == "COLLECTION":
            return CollectionVal(tuple(value_from_json(i) for i in obj["items"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed {kind} value: {exc}") from exc
    raise ValueError(f"unknown value kind: {kind!r}")


# ---------------------------------------------------------------------------
# blob stores (IMAGE payloads)

class MemoryBlobStore:
    """In-memory content-addressed byte store."""

    def __init__(self):
        self._blobs: dict[str, bytes] = {}

    def put(self, data: bytes) -> str:
        ref = hashlib.sha256(data).hexdigest()
        self._blobs[ref] = data
        return ref

    def get(self, ref: str) -> bytes:
        if ref not in self._blobs:
            raise KeyError(f"no blob {ref}")
        return self._blobs[ref]

    def __contains__(self, ref: str) -> bool:
        return ref in self._blobs


class FileBlobStore:
    """Content-addressed byte store backed by one file per blob."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, ref: str) -> Path:
        return self.root / ref

    def put(self, data: bytes) -> str:
        ref = hashlib.sha256(data).hexdigest()
        path = self._path(ref)
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            tmp.replace(path)
        return ref

    def get(self, ref: str) -> bytes:
        path = self._path(ref)
        if not path.exists():
            raise KeyError(f"no blob {ref}")
        return path.read_bytes()

    def __contains__(self, ref: str) -> bool:
        return self._path(ref).exists()


def image_value(blobs, media_type: str, data: bytes) -> ImageVal:
    return ImageVal(media_type, blobs.put(data))
