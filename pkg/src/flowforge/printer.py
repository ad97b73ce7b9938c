"""Canonical pretty-printers: parse(print(m)) == m modulo source spans."""

from __future__ import annotations

from .expr import (
    AppendStmt,
    AssignStmt,
    Binary,
    EmptySet,
    Expr,
    LetStmt,
    Literal,
    PathRef,
    RenameStmt,
    Script,
    Unary,
)
from .model import (
    AbrModel,
    ActivityStep,
    DeleteStep,
    Direction,
    DomainModel,
    EndLoopStep,
    FlowModel,
    GenericImplementation,
    IoRelation,
    MockImplementation,
    ParameterMapping,
    ProcessImplementation,
    RestImplementation,
    RetrieveStep,
    ScriptStep,
    ServiceRelation,
    StartLoopStep,
    StartStep,
    StoreStep,
    TypeRef,
    ValueMapping,
)
from .values import (
    BoolVal,
    DateVal,
    FloatVal,
    IntVal,
    LocationVal,
    StringVal,
    Value,
    format_instant,
)

_IND = "  "


def quote(text: str) -> str:
    out = ['"']
    for c in text:
        if c == '"':
            out.append('\\"')
        elif c == "\\":
            out.append("\\\\")
        elif c == "\n":
            out.append("\\n")
        elif c == "\t":
            out.append("\\t")
        elif c == "\r":
            out.append("\\r")
        elif c == "\0":
            out.append("\\0")
        elif ord(c) < 0x20:
            out.append(f"\\u{ord(c):04x}")
        else:
            out.append(c)
    out.append('"')
    return "".join(out)


def print_literal(v: Value) -> str:
    if isinstance(v, StringVal):
        return quote(v.value)
    if isinstance(v, IntVal):
        return str(v.value)
    if isinstance(v, FloatVal):
        return repr(v.value)
    if isinstance(v, BoolVal):
        return "true" if v.value else "false"
    if isinstance(v, DateVal):
        return f'date "{format_instant(v.epoch_ms)}"'
    if isinstance(v, LocationVal):
        return f"location({v.lat!r}, {v.lon!r})"
    raise TypeError(f"{type(v).__name__} has no literal syntax")


# ---------------------------------------------------------------------------
# expressions

_LEVEL_PRIMARY = 8
_LEVEL_NEG = 7
_BINARY_LEVEL = {
    "or": 1, "and": 2,
    "==": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4, "in": 4,
    "+": 5, "-": 5, "*": 6, "/": 6,
}
_LEVEL_NOT = 3


def _level(e: Expr) -> int:
    if isinstance(e, Binary):
        return _BINARY_LEVEL[e.op]
    if isinstance(e, Unary):
        return _LEVEL_NOT if e.op == "not" else _LEVEL_NEG
    return _LEVEL_PRIMARY


def print_expr(e: Expr) -> str:
    if isinstance(e, Literal):
        return print_literal(e.value)
    if isinstance(e, PathRef):
        return ".".join(e.path)
    if isinstance(e, EmptySet):
        return "[]"
    if isinstance(e, Unary):
        if e.op == "not":
            inner = print_expr(e.operand)
            if _level(e.operand) < _LEVEL_NOT:
                inner = f"({inner})"
            return f"not {inner}"
        inner = print_expr(e.operand)
        if _level(e.operand) < _LEVEL_NEG:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Binary):
        lvl = _BINARY_LEVEL[e.op]
        left = print_expr(e.left)
        if _level(e.left) < lvl or (lvl == 4 and _level(e.left) <= 4):
            left = f"({left})"
        right = print_expr(e.right)
        if _level(e.right) <= lvl:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression: {e!r}")


def print_statement(stmt) -> str:
    if isinstance(stmt, LetStmt):
        return f"let {stmt.name} = {print_expr(stmt.expr)}"
    if isinstance(stmt, AssignStmt):
        return f"{'.'.join(stmt.path)} = {print_expr(stmt.expr)}"
    if isinstance(stmt, AppendStmt):
        return f"append {'.'.join(stmt.path)} <- {print_expr(stmt.expr)}"
    if isinstance(stmt, RenameStmt):
        return f"rename {stmt.old} -> {stmt.new}"
    raise TypeError(f"not a statement: {stmt!r}")


# ---------------------------------------------------------------------------
# .domain

def _type_ref(ref: TypeRef) -> str:
    name = ref.target.value if ref.is_basic else ref.target
    return f"set {name}" if ref.is_set else name


def print_domain(model: DomainModel) -> str:
    lines = [f"domain {model.name} {{"]
    for td in model.types:
        lines.append(f"{_IND}type {td.name} {{")
        for a in td.attributes:
            lines.append(f"{_IND * 2}{a.name}: {_type_ref(a.type_ref)}")
        lines.append(f"{_IND}}}")
    for svc in model.services:
        lines.append(f"{_IND}service {svc.name} {{")
        for prm in svc.inputs:
            lines.append(f"{_IND * 2}in {prm.name}: {_type_ref(prm.type_ref)}")
        for prm in svc.outputs:
            lines.append(f"{_IND * 2}out {prm.name}: {_type_ref(prm.type_ref)}")
        lines.append(f"{_IND}}}")
    for io in model.ios:
        lines.append(f"{_IND}io {io.name} {{")
        for v in io.variables:
            lines.append(f"{_IND * 2}{v.direction.value} {v.name}: {_type_ref(v.type_ref)}")
        lines.append(f"{_IND}}}")
    for act in model.activities:
        lines.append(f"{_IND}activity {act.name} {{")
        for rel in act.relations:
            if isinstance(rel, ServiceRelation):
                lines.append(f"{_IND * 2}call {rel.service} {{")
                for m in rel.mappings:
                    lines.append(f"{_IND * 3}{_mapping(m)}")
                lines.append(f"{_IND * 2}}}")
            else:
                lines.append(f"{_IND * 2}io {rel.io} {{")
                for m in rel.output_mappings:
                    lines.append(f"{_IND * 3}show {_show_mapping(m)}")
                for m in rel.input_mappings:
                    lines.append(f"{_IND * 3}ask {m.endpoint} -> {'.'.join(m.path)}")
                lines.append(f"{_IND * 2}}}")
        lines.append(f"{_IND}}}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _mapping(m) -> str:
    if isinstance(m, ValueMapping):
        return f"{m.endpoint} = {print_literal(m.literal)}"
    arrow = "<-" if m.direction is Direction.IN else "->"
    return f"{m.endpoint} {arrow} {'.'.join(m.path)}"


def _show_mapping(m) -> str:
    if isinstance(m, ValueMapping):
        return f"{m.endpoint} = {print_literal(m.literal)}"
    return f"{m.endpoint} <- {'.'.join(m.path)}"


# ---------------------------------------------------------------------------
# .abr

def print_abr(model: AbrModel) -> str:
    lines = [f"bindings {model.name} for {model.target_domain} {{"]
    for b in model.bindings:
        impl = b.implementation
        if isinstance(impl, RestImplementation):
            lines.append(f"{_IND}implement {b.service} as REST {{")
            lines.append(f"{_IND * 2}method {impl.method.value}")
            lines.append(f"{_IND * 2}url {quote(impl.url_template)}")
            lines.append(f"{_IND * 2}timeout {impl.timeout_ms}")
            for k, v in impl.headers:
                lines.append(f"{_IND * 2}header {quote(k)} {quote(v)}")
            for sp in b.parameters:
                if sp.direction is Direction.IN:
                    place = impl.param_places[sp.abstract_name].value
                    lines.append(f"{_IND * 2}param {sp.abstract_name} -> {place} {sp.concrete_name}")
                else:
                    lines.append(f"{_IND * 2}result {sp.abstract_name} <- body {sp.concrete_name}")
        elif isinstance(impl, ProcessImplementation):
            lines.append(f"{_IND}implement {b.service} as PROCESS {{")
            lines.append(f"{_IND * 2}command {quote(impl.command)}")
            if impl.workdir is not None:
                lines.append(f"{_IND * 2}workdir {quote(impl.workdir)}")
            lines.extend(_plain_params(b))
        elif isinstance(impl, MockImplementation):
            lines.append(f"{_IND}implement {b.service} as MOCK {{")
            lines.append(f"{_IND * 2}fixture {quote(impl.fixture_file)}")
            lines.extend(_plain_params(b))
        elif isinstance(impl, GenericImplementation):
            lines.append(f"{_IND}implement {b.service} as {impl.kind} {{")
            for k, v in impl.config.items():
                lines.append(f"{_IND * 2}{k} {quote(v)}")
            lines.extend(_plain_params(b))
        else:
            raise TypeError(f"unknown implementation: {impl!r}")
        lines.append(f"{_IND}}}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _plain_params(b) -> list[str]:
    out = []
    for sp in b.parameters:
        if sp.direction is Direction.IN:
            out.append(f"{_IND * 2}param {sp.abstract_name} -> {sp.concrete_name}")
        else:
            out.append(f"{_IND * 2}result {sp.abstract_name} <- {sp.concrete_name}")
    return out


# ---------------------------------------------------------------------------
# .flow

def print_flow(model: FlowModel) -> str:
    lines = [f"flow {model.name} uses {', '.join(model.uses)} {{"]
    for step in model.steps:
        lines.extend(_step_lines(step))
    for t in model.transitions:
        cond = f" when {print_expr(t.condition)}" if t.condition is not None else ""
        lines.append(f"{_IND}{t.source} -> {t.target}{cond}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _step_lines(step) -> list[str]:
    if isinstance(step, StartStep):
        return [f"{_IND}start" if step.name == "start" else f"{_IND}start {step.name}"]
    if isinstance(step, ActivityStep):
        parts = [f"{_IND}step {step.name} = activity {step.activity}"]
        for ow in step.overwrites:
            parts.append(f"overwrite {ow.target} = {print_literal(ow.literal)}")
        return [" ".join(parts)]
    if isinstance(step, RetrieveStep):
        lines = [f"{_IND}retrieve {step.name} {{",
                 f"{_IND * 2}target {step.target_variable}",
                 f"{_IND * 2}type {step.type_name}"]
        if step.is_set:
            lines.append(f"{_IND * 2}set true")
        lines.extend(f"{_IND * 2}{_criterion(c)}" for c in step.criteria)
        lines.append(f"{_IND}}}")
        return lines
    if isinstance(step, StoreStep):
        return [f"{_IND}store {step.name} {{",
                f"{_IND * 2}vars {', '.join(step.variables)}",
                f"{_IND}}}"]
    if isinstance(step, DeleteStep):
        lines = [f"{_IND}delete {step.name} {{", f"{_IND * 2}type {step.type_name}"]
        lines.extend(f"{_IND * 2}{_criterion(c)}" for c in step.criteria)
        lines.append(f"{_IND}}}")
        return lines
    if isinstance(step, ScriptStep):
        lines = [f"{_IND}script {step.name} {{"]
        lines.extend(f"{_IND * 2}{print_statement(s)}" for s in step.script.statements)
        lines.append(f"{_IND}}}")
        return lines
    if isinstance(step, StartLoopStep):
        return [f"{_IND}startloop {step.name} over {'.'.join(step.data_flow_set)}"
                f" as {step.loop_name}"]
    if isinstance(step, EndLoopStep):
        return [f"{_IND}endloop {step.name} matches {step.matches}"]
    raise TypeError(f"unknown step: {step!r}")


def _criterion(c) -> str:
    op = c.op.value
    value = print_literal(c.literal) if c.literal is not None else ".".join(c.value_path)
    return f"where {'.'.join(c.field_path)} {op} {value}"
