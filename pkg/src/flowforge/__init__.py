"""flowforge: textual modeling languages plus a native flow interpreter.

Three model kinds work together: domains declare reusable building
blocks (types, abstract services, IO exchanges, activities), bindings
resolve abstract services to concrete implementations, and flows
compose activities into executable graphs. The engine interprets
validated bundles directly, suspending on IO and resuming when a client
answers.
"""

from .dataflow import DataFlow
from .engine import FlowInstance, IoRequest, Runtime, Status
from .errors import FlowforgeError
from .invoker import KindRegistry, default_registry, invoke, register_kind
from .model import (
    AbrModel,
    DomainModel,
    EntitySchema,
    FlowModel,
    derive_entity_schemas,
    resolve_type_ref,
)
from .parser import ParseResult, parse_abr, parse_domain, parse_flow
from .printer import print_abr, print_domain, print_flow
from .runner import IoScript, RunReport, report_for, run_with_script
from .store import DocumentStore, ResolvedCriterion
from .validator import (
    LinkedBundle,
    ValidationReport,
    check_dataflow_visibility,
    infer_start,
    load_bundle,
    match_loops,
    validate_bundle,
)
from .values import BasicType, Value

__version__ = "0.1.0"

__all__ = [
    "AbrModel",
    "BasicType",
    "DataFlow",
    "DocumentStore",
    "DomainModel",
    "EntitySchema",
    "FlowforgeError",
    "FlowInstance",
    "FlowModel",
    "IoRequest",
    "IoScript",
    "KindRegistry",
    "LinkedBundle",
    "ParseResult",
    "ResolvedCriterion",
    "RunReport",
    "Runtime",
    "Status",
    "ValidationReport",
    "Value",
    "__version__",
    "check_dataflow_visibility",
    "default_registry",
    "derive_entity_schemas",
    "infer_start",
    "invoke",
    "load_bundle",
    "match_loops",
    "parse_abr",
    "parse_domain",
    "parse_flow",
    "print_abr",
    "print_domain",
    "print_flow",
    "register_kind",
    "report_for",
    "resolve_type_ref",
    "run_with_script",
    "validate_bundle",
]
