"""Embedded document store behind the database steps.

One JSON-lines file per collection holds an append-only operation log
(puts and deletes); an in-memory index replays it on open. ``_meta.json``
records the schema fingerprint and the per-collection id counters; ids
are monotonic and never reused. A lock file keeps the root single-process.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .codec import check_doc, doc_from_record, record_from_doc
from .errors import StoreError
from .model import CriterionOp, EntitySchema, FieldDescriptor, ID_FIELD, ORDERING_OPS
from .values import (
    BasicType,
    BoolVal,
    CollectionVal,
    DateVal,
    FloatVal,
    IntVal,
    LocationVal,
    RecordVal,
    StringVal,
    Value,
    basic_type_of,
    canonical_json,
    format_instant,
    kind_name,
)

META_FILE = "_meta.json"
LOCK_FILE = ".lock"


@dataclass(frozen=True)
class ResolvedCriterion:
    """A criterion with its value already resolved to a concrete Value."""

    field_path: str
    op: CriterionOp
    value: Value


def schema_fingerprint(schemas: Iterable[EntitySchema]) -> str:
    import hashlib

    payload = canonical_json([
        {
            "collection": s.collection,
            "fields": [
                {"path": f.path,
                 "basic": f.basic.value if f.basic else None,
                 "type": f.type_name,
                 "repeated": f.repeated}
                for f in s.fields
            ],
        }
        for s in sorted(schemas, key=lambda s: s.collection)
    ])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class DocumentStore:
    """Criteria-filtered storage for entity documents derived from domain types."""

    def __init__(self, root: str | Path, schemas: Iterable[EntitySchema], *,
                 take_over_stale_lock: bool = True):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.schemas: dict[str, EntitySchema] = {s.collection: s for s in schemas}
        self._fingerprint = schema_fingerprint(self.schemas.values())
        self._acquire_lock(take_over_stale_lock)
        try:
            self._counters: dict[str, int] = {}
            self._index: dict[str, dict[int, dict]] = {c: {} for c in self.schemas}
            self._files: dict[str, object] = {}
            self._load_meta()
            for coll in self.schemas:
                self._replay(coll)
                self._files[coll] = open(self._log_path(coll), "a", encoding="utf-8")
        except BaseException:
            self._release_lock()
            raise
        self._closed = False

    # -- lifecycle -----------------------------------------------------------

    def _acquire_lock(self, take_over_stale: bool) -> None:
        lock = self.root / LOCK_FILE
        while True:
            try:
                fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(fd, str(os.getpid()).encode())
                os.close(fd)
                return
            except FileExistsError:
                try:
                    pid = int(lock.read_text().strip() or "0")
                except (ValueError, OSError):
                    pid = 0
                alive = False
                if pid > 0:
                    try:
                        os.kill(pid, 0)
                        alive = True
                    except ProcessLookupError:
                        alive = False
                    except PermissionError:
                        alive = True
                if alive or not take_over_stale:
                    raise StoreError(
                        f"store root {self.root} is locked by pid {pid}", code="E_LOCKED")
                lock.unlink(missing_ok=True)

    def _release_lock(self) -> None:
        (self.root / LOCK_FILE).unlink(missing_ok=True)

    def close(self) -> None:
        if getattr(self, "_closed", True):
            return
        self._write_meta()
        for f in self._files.values():
            f.close()
        self._release_lock()
        self._closed = True

    def __enter__(self) -> "DocumentStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- persistence ----------------------------------------------------------

    def _log_path(self, coll: str) -> Path:
        return self.root / f"{coll}.jsonl"

    def _load_meta(self) -> None:
        meta_path = self.root / META_FILE
        if meta_path.exists():
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise StoreError(f"unreadable {META_FILE}: {exc}", code="E_IO") from exc
            if meta.get("fingerprint") != self._fingerprint:
                raise StoreError(
                    f"store at {self.root} was created with different schemas",
                    code="E_SCHEMA_VIOLATION",
                )
            self._counters = {str(k): int(v) for k, v in meta.get("counters", {}).items()}
        for coll in self.schemas:
            self._counters.setdefault(coll, 0)

    def _write_meta(self) -> None:
        meta_path = self.root / META_FILE
        tmp = meta_path.with_suffix(".tmp")
        payload = canonical_json({"fingerprint": self._fingerprint,
                                  "counters": self._counters})
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        tmp.replace(meta_path)

    def _replay(self, coll: str) -> None:
        path = self._log_path(coll)
        if not path.exists():
            return
        docs = self._index[coll]
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                    if entry["op"] == "put":
                        doc = entry["doc"]
                        docs[int(doc[ID_FIELD])] = doc
                    elif entry["op"] == "del":
                        docs.pop(int(entry["id"]), None)
                    else:
                        raise ValueError(f"unknown op {entry['op']!r}")
                except (KeyError, TypeError, ValueError) as exc:
                    raise StoreError(
                        f"{path}:{lineno}: corrupt log entry: {exc}", code="E_IO"
                    ) from exc
        top = max(docs, default=0)
        if self._counters.get(coll, 0) < top:
            self._counters[coll] = top

    def _append(self, coll: str, entry: dict) -> None:
        fh = self._files[coll]
        try:
            fh.write(canonical_json(entry) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        except OSError as exc:
            raise StoreError(f"cannot write {coll} log: {exc}", code="E_IO") from exc

    # -- operations ------------------------------------------------------------

    def _schema(self, type_name: str) -> EntitySchema:
        if type_name not in self.schemas:
            raise StoreError(f"no collection for type '{type_name}'",
                             code="E_SCHEMA_VIOLATION")
        return self.schemas[type_name]

    def store(self, type_name: str, value: Value) -> list[int]:
        """Persist a record or a collection of records; returns their ids.

        Records carrying an ``_id`` overwrite that document (update);
        records without one are inserted under a fresh id.
        """
        schema = self._schema(type_name)
        if isinstance(value, CollectionVal):
            records = list(value.items)
        else:
            records = [value]
        ids: list[int] = []
        for record in records:
            if not isinstance(record, RecordVal) or record.type_name != type_name:
                raise StoreError(
                    f"cannot store {kind_name(record)} into collection '{type_name}'",
                    code="E_SCHEMA_VIOLATION",
                )
            doc = doc_from_record(record)
            if record.entity_id is None:
                self._counters[type_name] += 1
                doc[ID_FIELD] = self._counters[type_name]
            else:
                self._counters[type_name] = max(self._counters[type_name],
                                                record.entity_id)
            check_doc(doc, schema, self.schemas)
            self._append(type_name, {"op": "put", "doc": doc})
            self._index[type_name][doc[ID_FIELD]] = doc
            ids.append(doc[ID_FIELD])
        self._write_meta()
        return ids

    def retrieve(self, type_name: str, criteria: list[ResolvedCriterion],
                 want_set: bool) -> Value:
        """Select documents matching all criteria (conjunction).

        ``want_set`` true returns a possibly-empty collection in insertion
        order; false requires exactly one match.
        """
        schema = self._schema(type_name)
        matches = [doc for doc in self._index[type_name].values()
                   if all(self._matches(doc, c, schema) for c in criteria)]
        if want_set:
            return CollectionVal(tuple(
                record_from_doc(doc, type_name, self.schemas) for doc in matches))
        if not matches:
            raise StoreError(
                f"no {type_name} document matches the criteria", code="E_NOT_FOUND")
        if len(matches) > 1:
            raise StoreError(
                f"{len(matches)} {type_name} documents match; expected exactly one",
                code="E_AMBIGUOUS",
            )
        return record_from_doc(matches[0], type_name, self.schemas)

    def delete(self, type_name: str, criteria: list[ResolvedCriterion]) -> int:
        """Remove exactly the retrieve-matching set; returns the count."""
        schema = self._schema(type_name)
        doomed = [doc_id for doc_id, doc in self._index[type_name].items()
                  if all(self._matches(doc, c, schema) for c in criteria)]
        for doc_id in doomed:
            self._append(type_name, {"op": "del", "id": doc_id})
            del self._index[type_name][doc_id]
        return len(doomed)

    def count(self, type_name: str) -> int:
        self._schema(type_name)
        return len(self._index[type_name])

    def all_ids(self, type_name: str) -> list[int]:
        self._schema(type_name)
        return list(self._index[type_name])

    # -- criteria -----------------------------------------------------------------

    def _matches(self, doc: dict, crit: ResolvedCriterion, schema: EntitySchema) -> bool:
        desc = schema.field_at(crit.field_path)
        if desc is None:
            raise StoreError(
                f"{schema.collection} has no field '{crit.field_path}'",
                code="E_TYPE_MISMATCH",
            )
        data = doc
        for seg in crit.field_path.split("."):
            data = data[seg]
        return _apply_criterion(data, desc, crit)


def _plain_criterion_value(value: Value):
    from .codec import to_plain

    return to_plain(value)


def _apply_criterion(data, desc: FieldDescriptor, crit: ResolvedCriterion) -> bool:
    op = crit.op
    if op is CriterionOp.CONTAINS:
        if desc.repeated:
            _check_kind(crit.value, desc, element=True)
            return _plain_criterion_value(crit.value) in data
        if desc.basic is BasicType.STRING:
            if not isinstance(crit.value, StringVal):
                raise StoreError("CONTAINS on a STRING field needs a STRING value",
                                 code="E_TYPE_MISMATCH")
            return crit.value.value in data
        raise StoreError(
            f"CONTAINS needs a set or STRING field, '{desc.path}' is neither",
            code="E_TYPE_MISMATCH",
        )
    if desc.repeated:
        raise StoreError(
            f"operator {op.value} cannot apply to set field '{desc.path}'",
            code="E_SET_SCALAR_MISMATCH",
        )
    _check_kind(crit.value, desc, element=False)
    plain = _plain_criterion_value(crit.value)
    if op is CriterionOp.EQ:
        return _eq(data, plain)
    if op is CriterionOp.NEQ:
        return not _eq(data, plain)
    if desc.basic not in (BasicType.INTEGER, BasicType.FLOAT, BasicType.STRING,
                          BasicType.DATE):
        raise StoreError(
            f"operator {op.value} needs an ordered field, '{desc.path}' is"
            f" {desc.basic.value if desc.basic else desc.type_name}",
            code="E_TYPE_MISMATCH",
        )
    if op is CriterionOp.LT:
        return data < plain
    if op is CriterionOp.LTE:
        return data <= plain
    if op is CriterionOp.GT:
        return data > plain
    if op is CriterionOp.GTE:
        return data >= plain
    raise TypeError(op)


def _eq(a, b) -> bool:
    if isinstance(a, bool) != isinstance(b, bool):
        return False
    return a == b


def _check_kind(value: Value, desc: FieldDescriptor, *, element: bool) -> None:
    if isinstance(value, CollectionVal):
        raise StoreError("criterion value cannot be a set",
                         code="E_SET_SCALAR_MISMATCH")
    if desc.type_name is not None:
        if not isinstance(value, RecordVal) or value.type_name != desc.type_name:
            raise StoreError(
                f"field '{desc.path}' holds {desc.type_name} records,"
                f" got {kind_name(value)}",
                code="E_TYPE_MISMATCH",
            )
        return
    actual = basic_type_of(value)
    expected = desc.basic
    if actual is expected:
        return
    if expected is BasicType.FLOAT and actual is BasicType.INTEGER:
        return
    raise StoreError(
        f"field '{desc.path}' is {expected.value}, criterion value is"
        f" {kind_name(value)}",
        code="E_TYPE_MISMATCH",
    )
