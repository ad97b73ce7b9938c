"""In-memory representation of the three meta-models.

A DomainModel is a library of reusable building blocks (types, abstract
services, IO declarations, activities). An AbrModel binds a domain's
abstract services to concrete implementations. A FlowModel composes
activities and database steps into an executable graph.

Models are treated as immutable after construction; nothing mutates
them, so they are safe to share freely. ``span`` fields carry source
positions and never participate in equality (parse/print round-trips
compare models modulo spans).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

from .errors import ModelError, NotFoundError, UnknownTypeError
from .source import SourceSpan
from .values import BasicType, Value

Path = tuple[str, ...]


def path_str(path: Path) -> str:
    return ".".join(path)


class Direction(Enum):
    IN = "in"
    OUT = "out"


# ---------------------------------------------------------------------------
# domain meta-model

@dataclass
class TypeRef:
    """Reference to a basic kind or a declared type, optionally set-valued."""

    target: Union[BasicType, str]
    is_set: bool = False
    span: Optional[SourceSpan] = field(default=None, compare=False)

    @property
    def is_basic(self) -> bool:
        return isinstance(self.target, BasicType)

    def describe(self) -> str:
        name = self.target.value if self.is_basic else self.target
        return f"set {name}" if self.is_set else name


@dataclass
class AttrDef:
    name: str
    type_ref: TypeRef
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class TypeDef:
    name: str
    attributes: list[AttrDef] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)

    def attribute(self, name: str) -> Optional[AttrDef]:
        for a in self.attributes:
            if a.name == name:
                return a
        return None


@dataclass
class Param:
    name: str
    type_ref: TypeRef
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class ServiceDef:
    name: str
    inputs: list[Param] = field(default_factory=list)
    outputs: list[Param] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)

    def input(self, name: str) -> Optional[Param]:
        for p in self.inputs:
            if p.name == name:
                return p
        return None

    def output(self, name: str) -> Optional[Param]:
        for p in self.outputs:
            if p.name == name:
                return p
        return None

    def param_names(self) -> set[str]:
        return {p.name for p in self.inputs} | {p.name for p in self.outputs}


@dataclass
class IoVariable:
    name: str
    type_ref: TypeRef
    direction: Direction
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class IoDef:
    name: str
    variables: list[IoVariable] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)

    def variable(self, name: str) -> Optional[IoVariable]:
        for v in self.variables:
            if v.name == name:
                return v
        return None


@dataclass
class ParameterMapping:
    """Binds an endpoint (service parameter / IO variable) to a data-flow path.

    ``direction`` is syntactic: IN means the endpoint is fed from the
    path, OUT means the endpoint's value is written to the path.
    """

    endpoint: str
    path: Path
    direction: Direction
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class ValueMapping:
    """Binds an endpoint to a literal constant (always feeding IN)."""

    endpoint: str
    literal: Value
    span: Optional[SourceSpan] = field(default=None, compare=False)


Mapping = Union[ParameterMapping, ValueMapping]


@dataclass
class ServiceRelation:
    service: str
    mappings: list[Mapping] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class IoRelation:
    io: str
    output_mappings: list[Mapping] = field(default_factory=list)  # publish ("show")
    input_mappings: list[ParameterMapping] = field(default_factory=list)  # request ("ask")
    span: Optional[SourceSpan] = field(default=None, compare=False)


ActivityRelation = Union[ServiceRelation, IoRelation]


@dataclass
class ActivityDef:
    name: str
    relations: list[ActivityRelation] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class DomainModel:
    name: str
    types: list[TypeDef] = field(default_factory=list)
    services: list[ServiceDef] = field(default_factory=list)
    ios: list[IoDef] = field(default_factory=list)
    activities: list[ActivityDef] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)

    def find(self, kind: str, name: str):
        pools = {
            "type": self.types,
            "service": self.services,
            "io": self.ios,
            "activity": self.activities,
        }
        if kind not in pools:
            raise ValueError(f"unknown element kind {kind!r}")
        for el in pools[kind]:
            if el.name == name:
                return el
        return None

    def lookup(self, kind: str, name: str):
        el = self.find(kind, name)
        if el is None:
            raise NotFoundError(kind, name)
        return el


# ---------------------------------------------------------------------------
# type resolution and entity schemas

@dataclass(frozen=True)
class ResolvedType:
    basic: Optional[BasicType]
    type_def: Optional[TypeDef]
    is_set: bool

    @property
    def type_name(self) -> Optional[str]:
        return self.type_def.name if self.type_def is not None else None

    def describe(self) -> str:
        name = self.basic.value if self.basic else self.type_def.name
        return f"set {name}" if self.is_set else name


def resolve_type_ref(model: DomainModel, ref: TypeRef) -> ResolvedType:
    """Resolve a TypeRef against the model; raises UnknownTypeError."""
    if isinstance(ref.target, BasicType):
        return ResolvedType(ref.target, None, ref.is_set)
    td = model.find("type", ref.target)
    if td is None:
        raise UnknownTypeError(ref.target)
    return ResolvedType(None, td, ref.is_set)


@dataclass(frozen=True)
class FieldDescriptor:
    """One flattened entity field: a dotted path plus kind and multiplicity."""

    path: str
    basic: Optional[BasicType]  # None for embedded complex fields
    type_name: Optional[str]  # set for embedded complex fields
    repeated: bool = False


@dataclass(frozen=True)
class EntitySchema:
    collection: str
    id_field: str
    fields: tuple[FieldDescriptor, ...]

    def field_at(self, path: str) -> Optional[FieldDescriptor]:
        for f in self.fields:
            if f.path == path:
                return f
        return None


ID_FIELD = "_id"


def derive_entity_schemas(model: DomainModel) -> list[EntitySchema]:
    """Derive one storable entity schema per declared type.

    Scalar complex attributes flatten into dotted paths (with a marker
    descriptor for the embedded record itself); set-valued attributes
    stay arrays and do not flatten further. Every schema gains the
    synthetic ``_id`` field. Derivation is deterministic: declaration
    order in, identical schemas out.
    """
    return [_schema_for(model, td) for td in model.types]


def _schema_for(model: DomainModel, td: TypeDef) -> EntitySchema:
    fields: list[FieldDescriptor] = [FieldDescriptor(ID_FIELD, BasicType.INTEGER, None)]
    _flatten(model, td, (), fields, chain=(td.name,))
    return EntitySchema(td.name, ID_FIELD, tuple(fields))


def _flatten(model: DomainModel, td: TypeDef, prefix: Path,
             out: list[FieldDescriptor], chain: tuple[str, ...]):
    for attr in td.attributes:
        rt = resolve_type_ref(model, attr.type_ref)
        path = path_str(prefix + (attr.name,))
        if rt.basic is not None:
            out.append(FieldDescriptor(path, rt.basic, None, rt.is_set))
            continue
        nested = rt.type_def
        out.append(FieldDescriptor(path, None, nested.name, rt.is_set))
        if rt.is_set:
            continue  # array elements are described by their own schema
        if nested.name in chain:
            raise ModelError(
                f"type '{chain[0]}' requires an infinite value through "
                f"scalar attribute chain {' -> '.join(chain + (nested.name,))}",
                code="E_RECURSIVE_TYPE",
            )
        _flatten(model, nested, prefix + (attr.name,), out, chain + (nested.name,))


# ---------------------------------------------------------------------------
# ABR meta-model

class HttpMethod(Enum):
    GET = "GET"
    POST = "POST"
    PUT = "PUT"
    DELETE = "DELETE"


class RestPlace(Enum):
    PATH = "path"
    QUERY = "query"
    BODY = "body"


@dataclass
class ServiceParameter:
    """Maps a service's abstract parameter name to the implementation's name.

    For REST bodies and results the concrete name may be a dotted field
    path into the JSON document.
    """

    abstract_name: str
    concrete_name: str
    direction: Direction
    span: Optional[SourceSpan] = field(default=None, compare=False)


DEFAULT_TIMEOUT_MS = 30_000


@dataclass
class RestImplementation:
    method: HttpMethod
    url_template: str
    param_places: dict[str, RestPlace] = field(default_factory=dict)  # abstract name -> place
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    headers: list[tuple[str, str]] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class ProcessImplementation:
    """Local process: one JSON document on stdin, one on stdout, exit 0."""

    command: str
    workdir: Optional[str] = None
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class MockImplementation:
    fixture_file: str
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class GenericImplementation:
    """Opaque configuration block for a registered custom kind."""

    kind: str
    config: dict[str, str] = field(default_factory=dict)
    span: Optional[SourceSpan] = field(default=None, compare=False)


Implementation = Union[
    RestImplementation, ProcessImplementation, MockImplementation, GenericImplementation
]

KIND_REST = "REST"
KIND_PROCESS = "PROCESS"
KIND_MOCK = "MOCK"
BUILTIN_KINDS = frozenset({KIND_REST, KIND_PROCESS, KIND_MOCK})


def implementation_kind(impl: Implementation) -> str:
    if isinstance(impl, RestImplementation):
        return KIND_REST
    if isinstance(impl, ProcessImplementation):
        return KIND_PROCESS
    if isinstance(impl, MockImplementation):
        return KIND_MOCK
    return impl.kind


@dataclass
class ServiceBinding:
    service: str
    implementation: Implementation
    parameters: list[ServiceParameter] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)

    def parameter(self, abstract_name: str) -> Optional[ServiceParameter]:
        for p in self.parameters:
            if p.abstract_name == abstract_name:
                return p
        return None


@dataclass
class AbrModel:
    name: str
    target_domain: str
    bindings: list[ServiceBinding] = field(default_factory=list)
    source_dir: Optional[str] = field(default=None, compare=False)
    span: Optional[SourceSpan] = field(default=None, compare=False)

    def binding_for(self, service: str) -> Optional[ServiceBinding]:
        for b in self.bindings:
            if b.service == service:
                return b
        return None


# ---------------------------------------------------------------------------
# flow meta-model

class CriterionOp(Enum):
    EQ = "=="
    NEQ = "!="
    LT = "<"
    LTE = "<="
    GT = ">"
    GTE = ">="
    CONTAINS = "contains"


ORDERING_OPS = frozenset({CriterionOp.LT, CriterionOp.LTE, CriterionOp.GT, CriterionOp.GTE})


@dataclass
class FlowCriterion:
    """Selection predicate: entity field, operator, literal or data-flow path."""

    field_path: Path
    op: CriterionOp
    literal: Optional[Value] = None
    value_path: Optional[Path] = None
    span: Optional[SourceSpan] = field(default=None, compare=False)

    def __post_init__(self):
        if (self.literal is None) == (self.value_path is None):
            raise ValueError("criterion takes exactly one of literal / value_path")


@dataclass
class Overwrite:
    target: str
    literal: Value
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class StartStep:
    name: str
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class ActivityStep:
    name: str
    activity: str
    overwrites: list[Overwrite] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class StartLoopStep:
    name: str
    data_flow_set: Path = ()
    loop_name: str = ""
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class EndLoopStep:
    name: str
    matches: str = ""
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class ScriptStep:
    name: str
    script: "Script" = None  # expr.Script; forward-declared to keep layering flat
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class StoreStep:
    name: str
    variables: list[str] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class RetrieveStep:
    name: str
    target_variable: str = ""
    type_name: str = ""
    is_set: bool = False
    criteria: list[FlowCriterion] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class DeleteStep:
    name: str
    type_name: str = ""
    criteria: list[FlowCriterion] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)


Step = Union[
    StartStep, ActivityStep, StartLoopStep, EndLoopStep,
    ScriptStep, StoreStep, RetrieveStep, DeleteStep,
]


@dataclass
class Transition:
    source: str
    target: str
    condition: Optional["Expr"] = None  # expr.Expr
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class FlowModel:
    name: str
    uses: list[str] = field(default_factory=list)
    steps: list[Step] = field(default_factory=list)
    transitions: list[Transition] = field(default_factory=list)
    span: Optional[SourceSpan] = field(default=None, compare=False)

    def step(self, name: str) -> Optional[Step]:
        for s in self.steps:
            if s.name == name:
                return s
        return None

    def outgoing(self, name: str) -> list[Transition]:
        return [t for t in self.transitions if t.source == name]

    def incoming(self, name: str) -> list[Transition]:
        return [t for t in self.transitions if t.target == name]


# ---------------------------------------------------------------------------
# value construction against declared types

def check_value(model: DomainModel, value: Value, resolved: ResolvedType) -> None:
    """Verify that a runtime value conforms to a resolved type.

    Raises ModelError (code E_TYPE_MISMATCH) on any shape difference.
    Records must carry every declared attribute.
    """
    from .values import CollectionVal, RecordVal, basic_type_of, kind_name

    if resolved.is_set:
        if not isinstance(value, CollectionVal):
            raise ModelError(
                f"expected set of {ResolvedType(resolved.basic, resolved.type_def, False).describe()},"
                f" got {kind_name(value)}",
                code="E_TYPE_MISMATCH",
            )
        element = ResolvedType(resolved.basic, resolved.type_def, False)
        for item in value.items:
            check_value(model, item, element)
        return
    if resolved.basic is not None:
        if basic_type_of(value) is not resolved.basic:
            raise ModelError(
                f"expected {resolved.basic.value}, got {kind_name(value)}",
                code="E_TYPE_MISMATCH",
            )
        return
    td = resolved.type_def
    if not isinstance(value, RecordVal) or value.type_name != td.name:
        raise ModelError(
            f"expected {td.name} record, got {kind_name(value)}",
            code="E_TYPE_MISMATCH",
        )
    declared = {a.name for a in td.attributes}
    present = set(value.attrs)
    if declared != present:
        missing = declared - present
        extra = present - declared
        parts = []
        if missing:
            parts.append(f"missing {sorted(missing)}")
        if extra:
            parts.append(f"unexpected {sorted(extra)}")
        raise ModelError(
            f"record {td.name}: {', '.join(parts)}", code="E_TYPE_MISMATCH"
        )
    for attr in td.attributes:
        check_value(model, value.attrs[attr.name], resolve_type_ref(model, attr.type_ref))


def make_record(model: DomainModel, type_name: str, attrs: dict[str, Value],
                entity_id: int | None = None):
    """Build a validated record with attributes in declaration order."""
    from .values import RecordVal

    td = model.find("type", type_name)
    if td is None:
        raise UnknownTypeError(type_name)
    rec = RecordVal(type_name, {a.name: attrs[a.name] for a in td.attributes
                                if a.name in attrs}, entity_id)
    check_value(model, rec, ResolvedType(None, td, False))
    return rec
