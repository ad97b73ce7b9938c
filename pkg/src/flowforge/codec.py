"""Wire and document encodings for values.

Unlike the self-describing snapshot form in ``values``, these encodings
drop ``$kind`` wrappers: basics become bare JSON (dates as canonical
ISO-8601 strings, locations as ``{"lat","lon"}``), records become plain
objects and collections plain arrays. Decoding is therefore directed by
an expected type (a resolved domain type on the wire, an entity schema
in the store).

Images on the wire are inlined as ``{"mediaType", "base64"}``; in store
documents and snapshots they stay content-addressed references.
"""

from __future__ import annotations

import base64
from typing import Optional

from .errors import FlowforgeError, StoreError
from .model import (
    DomainModel,
    EntitySchema,
    FieldDescriptor,
    ID_FIELD,
    ResolvedType,
    resolve_type_ref,
)
from .values import (
    BasicType,
    BoolVal,
    CollectionVal,
    DateVal,
    FloatVal,
    ImageVal,
    IntVal,
    LocationVal,
    RecordVal,
    StringVal,
    Value,
    format_instant,
    kind_name,
    parse_instant,
)


class DecodeError(FlowforgeError):
    code = "E_DECODE"


def to_plain(v: Value, *, blobs=None, inline_images: bool = False):
    """Encode a value to bare JSON. Records drop their entity ids."""
    if isinstance(v, StringVal):
        return v.value
    if isinstance(v, IntVal):
        return v.value
    if isinstance(v, FloatVal):
        return v.value
    if isinstance(v, BoolVal):
        return v.value
    if isinstance(v, DateVal):
        return format_instant(v.epoch_ms)
    if isinstance(v, LocationVal):
        return {"lat": v.lat, "lon": v.lon}
    if isinstance(v, ImageVal):
        if inline_images:
            if blobs is None or v.ref not in blobs:
                raise DecodeError(f"image bytes for {v.ref} are not available")
            return {"mediaType": v.media_type,
                    "base64": base64.b64encode(blobs.get(v.ref)).decode("ascii")}
        return {"mediaType": v.media_type, "ref": v.ref}
    if isinstance(v, RecordVal):
        return {k: to_plain(a, blobs=blobs, inline_images=inline_images)
                for k, a in v.attrs.items()}
    if isinstance(v, CollectionVal):
        return [to_plain(i, blobs=blobs, inline_images=inline_images) for i in v.items]
    raise TypeError(f"not a value: {v!r}")


def _decode_basic(data, basic: BasicType, *, blobs=None) -> Value:
    try:
        if basic is BasicType.STRING:
            if not isinstance(data, str):
                raise ValueError(f"expected string, got {type(data).__name__}")
            return StringVal(data)
        if basic is BasicType.INTEGER:
            if isinstance(data, bool) or not isinstance(data, int):
                raise ValueError(f"expected integer, got {type(data).__name__}")
            return IntVal(data)
        if basic is BasicType.FLOAT:
            if isinstance(data, bool) or not isinstance(data, (int, float)):
                raise ValueError(f"expected number, got {type(data).__name__}")
            return FloatVal(float(data))
        if basic is BasicType.BOOLEAN:
            if not isinstance(data, bool):
                raise ValueError(f"expected boolean, got {type(data).__name__}")
            return BoolVal(data)
        if basic is BasicType.DATE:
            if not isinstance(data, str):
                raise ValueError("expected ISO-8601 string")
            return DateVal(parse_instant(data))
        if basic is BasicType.LOCATION:
            return LocationVal(float(data["lat"]), float(data["lon"]))
        if basic is BasicType.IMAGE:
            media = str(data["mediaType"])
            if "base64" in data:
                raw = base64.b64decode(data["base64"])
                if blobs is None:
                    raise ValueError("no blob store to hold image bytes")
                return ImageVal(media, blobs.put(raw))
            return ImageVal(media, str(data["ref"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DecodeError(f"bad {basic.value} value: {exc}") from exc
    raise TypeError(basic)


def from_plain(data, model: DomainModel, resolved: ResolvedType, *, blobs=None) -> Value:
    """Decode bare JSON against a resolved domain type."""
    if resolved.is_set:
        if not isinstance(data, list):
            raise DecodeError(f"expected array for {resolved.describe()}")
        element = ResolvedType(resolved.basic, resolved.type_def, False)
        return CollectionVal(tuple(
            from_plain(item, model, element, blobs=blobs) for item in data))
    if resolved.basic is not None:
        return _decode_basic(data, resolved.basic, blobs=blobs)
    td = resolved.type_def
    if not isinstance(data, dict):
        raise DecodeError(f"expected object for record {td.name}")
    entity_id = data.get(ID_FIELD)
    if entity_id is not None and (isinstance(entity_id, bool) or not isinstance(entity_id, int)):
        raise DecodeError(f"bad {ID_FIELD} in {td.name} record")
    attrs: dict[str, Value] = {}
    for attr in td.attributes:
        if attr.name not in data:
            raise DecodeError(f"record {td.name} is missing attribute '{attr.name}'")
        attrs[attr.name] = from_plain(
            data[attr.name], model, resolve_type_ref(model, attr.type_ref), blobs=blobs)
    extra = set(data) - {a.name for a in td.attributes} - {ID_FIELD}
    if extra:
        raise DecodeError(f"record {td.name} has unknown attributes {sorted(extra)}")
    return RecordVal(td.name, attrs, entity_id)


# ---------------------------------------------------------------------------
# store documents (schema-directed; independent of the domain model)

class SchemaViolation(StoreError):
    code = "E_SCHEMA_VIOLATION"


def doc_from_record(record: RecordVal) -> dict:
    doc = to_plain(record)
    if record.entity_id is not None:
        doc[ID_FIELD] = record.entity_id
    return doc


def _top_level(schema: EntitySchema) -> list[FieldDescriptor]:
    return [f for f in schema.fields if "." not in f.path and f.path != ID_FIELD]


def check_doc(doc: dict, schema: EntitySchema, schemas: dict[str, EntitySchema]) -> None:
    if not isinstance(doc, dict):
        raise SchemaViolation(f"{schema.collection}: document must be an object")
    expected = {f.path for f in _top_level(schema)}
    present = set(doc) - {ID_FIELD}
    if expected != present:
        raise SchemaViolation(
            f"{schema.collection}: fields {sorted(present)} do not match schema"
            f" {sorted(expected)}")
    for desc in _top_level(schema):
        _check_field(doc[desc.path], desc, schema.collection, schemas)


def _check_field(data, desc: FieldDescriptor, coll: str,
                 schemas: dict[str, EntitySchema]) -> None:
    if desc.repeated:
        if not isinstance(data, list):
            raise SchemaViolation(f"{coll}.{desc.path}: expected array")
        scalar = FieldDescriptor(desc.path, desc.basic, desc.type_name, False)
        for item in data:
            _check_field(item, scalar, coll, schemas)
        return
    if desc.type_name is not None:
        if desc.type_name not in schemas:
            raise SchemaViolation(f"{coll}.{desc.path}: no schema for {desc.type_name}")
        check_doc(data, schemas[desc.type_name], schemas)
        if isinstance(data, dict) and ID_FIELD in data:
            raise SchemaViolation(f"{coll}.{desc.path}: embedded documents cannot carry {ID_FIELD}")
        return
    basic = desc.basic
    ok = {
        BasicType.STRING: lambda d: isinstance(d, str),
        BasicType.INTEGER: lambda d: isinstance(d, int) and not isinstance(d, bool),
        BasicType.FLOAT: lambda d: isinstance(d, (int, float)) and not isinstance(d, bool),
        BasicType.BOOLEAN: lambda d: isinstance(d, bool),
        BasicType.DATE: lambda d: isinstance(d, str) and _is_instant(d),
        BasicType.LOCATION: lambda d: isinstance(d, dict) and set(d) == {"lat", "lon"},
        BasicType.IMAGE: lambda d: isinstance(d, dict) and "mediaType" in d and "ref" in d,
    }[basic]
    if not ok(data):
        raise SchemaViolation(f"{coll}.{desc.path}: not a valid {basic.value}")


def _is_instant(text: str) -> bool:
    try:
        parse_instant(text)
        return True
    except ValueError:
        return False


def record_from_doc(doc: dict, collection: str,
                    schemas: dict[str, EntitySchema], *, top_level: bool = True) -> RecordVal:
    schema = schemas[collection]
    attrs: dict[str, Value] = {}
    for desc in _top_level(schema):
        attrs[desc.path] = _field_value(doc[desc.path], desc, schemas)
    entity_id = doc.get(ID_FIELD) if top_level else None
    return RecordVal(collection, attrs, entity_id)


def _field_value(data, desc: FieldDescriptor, schemas: dict[str, EntitySchema]) -> Value:
    if desc.repeated:
        scalar = FieldDescriptor(desc.path, desc.basic, desc.type_name, False)
        return CollectionVal(tuple(_field_value(i, scalar, schemas) for i in data))
    if desc.type_name is not None:
        return record_from_doc(data, desc.type_name, schemas, top_level=False)
    return _decode_basic(data, desc.basic)
