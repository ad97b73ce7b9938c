"""Cross-model linking and every static rule the meta-models imply.

Validation runs in phases: domain-local rules, binding rules, flow
linking, start inference, loop regions, type checks on mappings and
expressions, and finally data-flow visibility. A phase that reports
errors stops the later phases (their inputs would be unreliable), so a
defective bundle reports the root cause rather than a cascade.

A bundle with zero ERROR diagnostics is executable by the engine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field
from pathlib import Path as FsPath
from typing import Optional

from . import parser as dsl
from .expr import (
    AppendStmt,
    AssignStmt,
    ExprTypeError,
    LetStmt,
    RenameStmt,
    Script,
    StaticType,
    collect_paths,
    infer_expr_type,
    infer_path_type,
    static_of_value,
    types_compatible,
)
from .model import (
    AbrModel,
    ActivityDef,
    ActivityStep,
    CriterionOp,
    DeleteStep,
    Direction,
    DomainModel,
    EndLoopStep,
    EntitySchema,
    FlowCriterion,
    FlowModel,
    GenericImplementation,
    IoDef,
    IoRelation,
    ParameterMapping,
    ProcessImplementation,
    RestImplementation,
    RestPlace,
    RetrieveStep,
    ScriptStep,
    ServiceBinding,
    ServiceDef,
    ServiceRelation,
    StartLoopStep,
    StartStep,
    Step,
    StoreStep,
    Transition,
    TypeDef,
    ValueMapping,
    derive_entity_schemas,
    implementation_kind,
    resolve_type_ref,
)
from .errors import ModelError, UnknownTypeError
from .source import Diagnostic, Severity, SourceSpan, error, has_errors, warning
from .values import BasicType

_FALLBACK_SPAN = SourceSpan("<model>", 1, 1)


def _span(el) -> SourceSpan:
    return getattr(el, "span", None) or _FALLBACK_SPAN


@dataclass
class ValidationReport:
    diagnostics: list[Diagnostic] = dc_field(default_factory=list)
    inferred_start: Optional[str] = None

    @property
    def ok(self) -> bool:
        return not has_errors(self.diagnostics)

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.ERROR]

    def codes(self) -> set[str]:
        return {d.code for d in self.diagnostics}

    def error_codes(self) -> set[str]:
        return {d.code for d in self.errors}

    def render(self) -> str:
        return "\n".join(d.render() for d in self.diagnostics)


@dataclass
class LoopInfo:
    start: str
    end: str
    loop_name: str
    body: frozenset[str]

    @property
    def region(self) -> frozenset[str]:
        return self.body | {self.start, self.end}


@dataclass
class LinkedBundle:
    """The validated triple the engine executes."""

    domains: dict[str, DomainModel]
    abrs: list[AbrModel] = dc_field(default_factory=list)
    flow: Optional[FlowModel] = None
    report: ValidationReport = dc_field(default_factory=ValidationReport)
    # service name -> (binding, owning abr); only for services of used domains
    bindings: dict[str, tuple[ServiceBinding, AbrModel]] = dc_field(default_factory=dict)
    # flow-scope symbol tables: name -> (definition, owning domain)
    types: dict[str, tuple[TypeDef, DomainModel]] = dc_field(default_factory=dict)
    services: dict[str, tuple[ServiceDef, DomainModel]] = dc_field(default_factory=dict)
    ios: dict[str, tuple[IoDef, DomainModel]] = dc_field(default_factory=dict)
    activities: dict[str, tuple[ActivityDef, DomainModel]] = dc_field(default_factory=dict)
    inferred_start: Optional[str] = None
    loops: list[LoopInfo] = dc_field(default_factory=list)
    var_types: dict[str, StaticType] = dc_field(default_factory=dict)
    loop_env: dict[str, dict[str, StaticType]] = dc_field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.report.ok

    def entity_schemas(self) -> list[EntitySchema]:
        out: list[EntitySchema] = []
        if self.flow is not None:
            for name in self.flow.uses:
                if name in self.domains:
                    out.extend(derive_entity_schemas(self.domains[name]))
        else:
            for dom in self.domains.values():
                out.extend(derive_entity_schemas(dom))
        return out

    def loop_for_start(self, name: str) -> Optional[LoopInfo]:
        for lp in self.loops:
            if lp.start == name:
                return lp
        return None

    def loop_for_end(self, name: str) -> Optional[LoopInfo]:
        for lp in self.loops:
            if lp.end == name:
                return lp
        return None


# ---------------------------------------------------------------------------
# entry points

def validate_bundle(domains: list[DomainModel], abrs: list[AbrModel] | None = None,
                    flow: Optional[FlowModel] = None, *,
                    known_kinds=None,
                    external_vars: Optional[dict[str, StaticType]] = None) -> LinkedBundle:
    if known_kinds is None:
        from .invoker import default_registry

        known_kinds = default_registry().kind_names()
    abrs = list(abrs or [])
    bundle = LinkedBundle({d.name: d for d in domains}, abrs, flow)
    diags = bundle.report.diagnostics

    phases = [
        lambda: _check_domains(bundle, diags),
        lambda: _check_abrs(bundle, diags, known_kinds),
        lambda: _link_flow(bundle, diags),
        lambda: _infer_start_phase(bundle, diags),
        lambda: _match_loops_phase(bundle, diags),
        lambda: _check_types_and_mappings(bundle, diags),
        lambda: _check_visibility(bundle, diags, external_vars or {}),
    ]
    for phase in phases:
        before = len(bundle.report.errors)
        phase()
        if len(bundle.report.errors) > before:
            break
    return bundle


def load_bundle(paths: list[str], *, known_kinds=None,
                external_vars=None) -> tuple[LinkedBundle, list[Diagnostic]]:
    """Parse model files (by extension) and validate them as one bundle.

    Returns the bundle plus parse diagnostics; parse errors for any file
    leave the corresponding model out and the bundle not-ok.
    """
    if known_kinds is None:
        from .invoker import default_registry

        known_kinds = default_registry().kind_names()
    parse_diags: list[Diagnostic] = []
    domains: list[DomainModel] = []
    abrs: list[AbrModel] = []
    flow: Optional[FlowModel] = None
    for path in paths:
        p = FsPath(path)
        text = p.read_text(encoding="utf-8")
        if p.suffix == ".domain":
            res = dsl.parse_domain(text, str(p))
            if res.model:
                domains.append(res.model)
        elif p.suffix == ".abr":
            res = dsl.parse_abr(text, str(p), known_kinds)
            if res.model:
                res.model.source_dir = str(p.parent)
                abrs.append(res.model)
        elif p.suffix == ".flow":
            res = dsl.parse_flow(text, str(p))
            if res.model:
                flow = res.model
        else:
            parse_diags.append(error(SourceSpan(str(p), 1, 1), "E_SYNTAX",
                                     f"unknown model extension {p.suffix!r}"))
            continue
        parse_diags.extend(res.diagnostics)
    bundle = validate_bundle(domains, abrs, flow, known_kinds=known_kinds,
                             external_vars=external_vars)
    if has_errors(parse_diags):
        # parse failures make the bundle non-executable even if the rest links
        bundle.report.diagnostics[:0] = parse_diags
        parse_diags = []
    return bundle, parse_diags


# ---------------------------------------------------------------------------
# phase: domain-local rules

def _check_domains(bundle: LinkedBundle, diags: list[Diagnostic]) -> None:
    for dom in bundle.domains.values():
        for td in dom.types:
            for attr in td.attributes:
                _check_ref(dom, attr.type_ref, diags)
        for svc in dom.services:
            for prm in svc.inputs + svc.outputs:
                _check_ref(dom, prm.type_ref, diags)
        for io in dom.ios:
            for v in io.variables:
                _check_ref(dom, v.type_ref, diags)
        try:
            derive_entity_schemas(dom)
        except UnknownTypeError:
            pass  # reported above per reference
        except ModelError as exc:
            diags.append(error(_span(dom), exc.code, str(exc)))
        for act in dom.activities:
            _check_activity(dom, act, diags)


def _check_ref(dom: DomainModel, ref, diags: list[Diagnostic]) -> None:
    try:
        resolve_type_ref(dom, ref)
    except UnknownTypeError as exc:
        diags.append(error(_span(ref), "E_UNKNOWN_TYPE", str(exc)))


def _check_activity(dom: DomainModel, act: ActivityDef, diags: list[Diagnostic]) -> None:
    io_relations = [r for r in act.relations if isinstance(r, IoRelation)]
    if len(io_relations) > 1:
        diags.append(error(_span(io_relations[1]), "E_MULTI_IO",
                           f"activity '{act.name}' has more than one io relation"))
    for rel in act.relations:
        if isinstance(rel, ServiceRelation):
            svc = dom.find("service", rel.service)
            if svc is None:
                diags.append(error(_span(rel), "E_UNKNOWN_SERVICE",
                                   f"activity '{act.name}' calls unknown service"
                                   f" '{rel.service}'"))
                continue
            seen_inputs: set[str] = set()
            seen_outputs: set[str] = set()
            for m in rel.mappings:
                is_input = isinstance(m, ValueMapping) or m.direction is Direction.IN
                if is_input:
                    if svc.input(m.endpoint) is None:
                        diags.append(error(_span(m), "E_PARAM_MISMATCH",
                                           f"service '{svc.name}' has no input"
                                           f" '{m.endpoint}'"))
                    elif m.endpoint in seen_inputs:
                        diags.append(error(_span(m), "E_PARAM_MISMATCH",
                                           f"input '{m.endpoint}' mapped twice"))
                    seen_inputs.add(m.endpoint)
                else:
                    if svc.output(m.endpoint) is None:
                        diags.append(error(_span(m), "E_PARAM_MISMATCH",
                                           f"service '{svc.name}' has no output"
                                           f" '{m.endpoint}'"))
                    elif m.endpoint in seen_outputs:
                        diags.append(error(_span(m), "E_PARAM_MISMATCH",
                                           f"output '{m.endpoint}' mapped twice"))
                    seen_outputs.add(m.endpoint)
            missing = {p.name for p in svc.inputs} - seen_inputs
            if missing:
                diags.append(error(_span(rel), "E_PARAM_MISMATCH",
                                   f"activity '{act.name}' does not map service"
                                   f" inputs {sorted(missing)}"))
        else:
            io = dom.find("io", rel.io)
            if io is None:
                diags.append(error(_span(rel), "E_UNKNOWN_IO",
                                   f"activity '{act.name}' uses unknown io '{rel.io}'"))
                continue
            for m in rel.output_mappings:
                v = io.variable(m.endpoint)
                if v is None or v.direction is not Direction.OUT:
                    diags.append(error(_span(m), "E_PARAM_MISMATCH",
                                       f"'{m.endpoint}' is not an out variable of"
                                       f" io '{io.name}'"))
            for m in rel.input_mappings:
                v = io.variable(m.endpoint)
                if v is None or v.direction is not Direction.IN:
                    diags.append(error(_span(m), "E_PARAM_MISMATCH",
                                       f"'{m.endpoint}' is not an in variable of"
                                       f" io '{io.name}'"))


# ---------------------------------------------------------------------------
# phase: ABR rules

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _check_abrs(bundle: LinkedBundle, diags: list[Diagnostic], known_kinds) -> None:
    from .invoker import effective_parameters

    bound: dict[str, AbrModel] = {}
    for abr in bundle.abrs:
        dom = bundle.domains.get(abr.target_domain)
        if dom is None:
            diags.append(error(_span(abr), "E_UNKNOWN_DOMAIN",
                               f"bindings '{abr.name}' target unknown domain"
                               f" '{abr.target_domain}'"))
            continue
        for b in abr.bindings:
            if b.service in bound:
                diags.append(error(_span(b), "E_DUPLICATE_BINDING",
                                   f"service '{b.service}' is bound by both"
                                   f" '{bound[b.service].name}' and '{abr.name}'"))
            else:
                bound[b.service] = abr
            impl = b.implementation
            if isinstance(impl, GenericImplementation) and impl.kind not in known_kinds:
                diags.append(error(_span(b), "E_UNKNOWN_KIND",
                                   f"implementation kind '{impl.kind}' is not registered"))
            svc = dom.find("service", b.service)
            if svc is None:
                diags.append(error(_span(b), "E_UNKNOWN_SERVICE",
                                   f"binding for unknown service '{b.service}'"))
                continue
            bundle.bindings[b.service] = (b, abr)
            declared = {(p.name, Direction.IN) for p in svc.inputs}
            declared |= {(p.name, Direction.OUT) for p in svc.outputs}
            mapped = {(p.abstract_name, p.direction)
                      for p in effective_parameters(b, svc)}
            for name, direction in sorted(mapped - declared):
                diags.append(error(_span(b), "E_PARAM_MISMATCH",
                                   f"binding for '{b.service}' maps unknown"
                                   f" {direction.value} parameter '{name}'"))
            for name, direction in sorted(declared - mapped):
                diags.append(error(_span(b), "E_PARAM_MISMATCH",
                                   f"binding for '{b.service}' does not map"
                                   f" {direction.value} parameter '{name}'"))
            if isinstance(impl, RestImplementation):
                _check_rest(b, impl, svc, diags)


def _check_rest(b: ServiceBinding, impl: RestImplementation, svc: ServiceDef,
                diags: list[Diagnostic]) -> None:
    from .invoker import effective_parameters

    path_params = {p.concrete_name for p in effective_parameters(b, svc)
                   if p.direction is Direction.IN
                   and impl.param_places.get(p.abstract_name) is RestPlace.PATH}
    placeholders = set(_PLACEHOLDER_RE.findall(impl.url_template))
    for ph in sorted(placeholders - path_params):
        diags.append(error(_span(impl), "E_BAD_URL_TEMPLATE",
                           f"url placeholder {{{ph}}} has no path-bound parameter"))
    for missing in sorted(path_params - placeholders):
        diags.append(error(_span(impl), "E_BAD_URL_TEMPLATE",
                           f"path parameter '{missing}' does not appear in the url"))


# ---------------------------------------------------------------------------
# phase: flow linking

def _link_flow(bundle: LinkedBundle, diags: list[Diagnostic]) -> None:
    flow = bundle.flow
    if flow is None:
        return
    used: list[DomainModel] = []
    for name in flow.uses:
        dom = bundle.domains.get(name)
        if dom is None:
            diags.append(error(_span(flow), "E_UNKNOWN_DOMAIN",
                               f"flow uses unknown domain '{name}'"))
        else:
            used.append(dom)
    if len(used) < len(flow.uses):
        return

    tables = (("type", bundle.types, lambda d: d.types),
              ("service", bundle.services, lambda d: d.services),
              ("io", bundle.ios, lambda d: d.ios),
              ("activity", bundle.activities, lambda d: d.activities))
    for kind, table, pick in tables:
        for dom in used:
            for el in pick(dom):
                if el.name in table:
                    other = table[el.name][1]
                    if other is not dom:
                        diags.append(error(
                            _span(el), "E_NAME_COLLISION",
                            f"{kind} '{el.name}' is defined by both domains"
                            f" '{other.name}' and '{dom.name}'"))
                    continue
                table[el.name] = (el, dom)

    seen_steps: dict[str, Step] = {}
    for step in flow.steps:
        if step.name in seen_steps:
            diags.append(error(_span(step), "E_DUPLICATE_NAME",
                               f"duplicate step '{step.name}'"))
        seen_steps[step.name] = step
    for t in flow.transitions:
        for end in (t.source, t.target):
            if end not in seen_steps:
                diags.append(error(_span(t), "E_UNKNOWN_STEP",
                                   f"transition references undeclared step '{end}'"))

    used_services: set[str] = set()
    for step in flow.steps:
        if isinstance(step, ActivityStep):
            if step.activity not in bundle.activities:
                diags.append(error(_span(step), "E_UNKNOWN_ACTIVITY",
                                   f"step '{step.name}' references unknown activity"
                                   f" '{step.activity}'"))
                continue
            act, _dom = bundle.activities[step.activity]
            for rel in act.relations:
                if isinstance(rel, ServiceRelation):
                    used_services.add(rel.service)
        elif isinstance(step, (RetrieveStep, DeleteStep)):
            if step.type_name not in bundle.types:
                diags.append(error(_span(step), "E_UNKNOWN_TYPE",
                                   f"step '{step.name}' targets unknown type"
                                   f" '{step.type_name}'"))
    for svc in sorted(used_services):
        if svc not in bundle.bindings:
            diags.append(error(_span(flow), "E_UNBOUND_SERVICE",
                               f"service '{svc}' used by the flow has no"
                               f" implementation binding"))

    for step in flow.steps:
        defaults = [t for t in flow.outgoing(step.name) if t.condition is None]
        if len(defaults) > 1:
            diags.append(error(_span(defaults[1]), "E_MULTIPLE_DEFAULTS",
                               f"step '{step.name}' has more than one"
                               f" unconditioned outgoing transition"))


# ---------------------------------------------------------------------------
# phase: start inference

def infer_start(flow: FlowModel) -> tuple[Optional[str], list[Diagnostic]]:
    """The step execution begins at, per the start rules.

    An explicit start step's unique successor wins; otherwise the flow
    must have exactly one step with no incoming transition.
    """
    diags: list[Diagnostic] = []
    starts = [s for s in flow.steps if isinstance(s, StartStep)]
    if len(starts) > 1:
        for extra in starts[1:]:
            diags.append(error(_span(extra), "E_MULTIPLE_START_STEPS",
                               "flow declares more than one start step"))
        return None, diags
    if starts:
        ss = starts[0]
        if flow.incoming(ss.name):
            diags.append(error(_span(ss), "E_START_HAS_INCOMING",
                               f"start step '{ss.name}' is the target of a transition"))
            return None, diags
        out = flow.outgoing(ss.name)
        if len(out) != 1:
            diags.append(error(_span(ss), "E_AMBIGUOUS_START",
                               f"start step '{ss.name}' must have exactly one"
                               f" outgoing transition, found {len(out)}"))
            return None, diags
        return out[0].target, diags
    candidates = [s for s in flow.steps if not flow.incoming(s.name)]
    if len(candidates) == 1:
        return candidates[0].name, diags
    diags.append(error(_span(flow), "E_AMBIGUOUS_START",
                       f"cannot infer the starting step ({len(candidates)} steps have"
                       f" no incoming transition); declare a start step"))
    return None, diags


def _infer_start_phase(bundle: LinkedBundle, diags: list[Diagnostic]) -> None:
    if bundle.flow is None:
        return
    start, start_diags = infer_start(bundle.flow)
    diags.extend(start_diags)
    bundle.inferred_start = start
    bundle.report.inferred_start = start


# ---------------------------------------------------------------------------
# phase: loop pairing and regions

def match_loops(flow: FlowModel) -> tuple[list[LoopInfo], list[Diagnostic]]:
    """Pair start/end loop steps and verify single-entry single-exit bodies."""
    diags: list[Diagnostic] = []
    starts = {s.name: s for s in flow.steps if isinstance(s, StartLoopStep)}
    ends = [s for s in flow.steps if isinstance(s, EndLoopStep)]
    by_start: dict[str, list[EndLoopStep]] = {name: [] for name in starts}
    for e in ends:
        if e.matches not in starts:
            diags.append(error(_span(e), "E_UNMATCHED_LOOP",
                               f"end loop '{e.name}' matches unknown start loop"
                               f" '{e.matches}'"))
            continue
        by_start[e.matches].append(e)
    loops: list[LoopInfo] = []
    for name, s in starts.items():
        matched = by_start.get(name, [])
        if len(matched) != 1:
            diags.append(error(_span(s), "E_UNMATCHED_LOOP",
                               f"start loop '{name}' is matched by {len(matched)}"
                               f" end loops, expected exactly one"))
            continue
        loops.append(LoopInfo(name, matched[0].name, s.loop_name, frozenset()))
    if has_errors(diags):
        return loops, diags

    succ: dict[str, set[str]] = {st.name: set() for st in flow.steps}
    pred: dict[str, set[str]] = {st.name: set() for st in flow.steps}
    for t in flow.transitions:
        succ[t.source].add(t.target)
        pred[t.target].add(t.source)

    def reach(origin: str, stop: str, edges: dict[str, set[str]]) -> set[str]:
        seen: set[str] = set()
        stack = [n for n in edges.get(origin, ())]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            if n == stop:
                continue  # do not traverse past the boundary step
            stack.extend(edges.get(n, ()))
        return seen

    for i, lp in enumerate(loops):
        fwd = reach(lp.start, lp.end, succ)
        if lp.end not in fwd:
            diags.append(error(_span(starts[lp.start]), "E_LOOP_CROSSING",
                               f"end loop '{lp.end}' is not reachable from"
                               f" '{lp.start}'"))
            continue
        bwd = reach(lp.end, lp.start, pred)
        body = frozenset((fwd & bwd) - {lp.start, lp.end})
        loops[i] = lp = LoopInfo(lp.start, lp.end, lp.loop_name, body)

        if len(flow.outgoing(lp.start)) != 1:
            diags.append(error(_span(starts[lp.start]), "E_LOOP_CROSSING",
                               f"start loop '{lp.start}' must have exactly one"
                               f" outgoing transition"))
        inside = body | {lp.start}
        for t in flow.transitions:
            enters = t.target in body or t.target == lp.end
            if enters and t.source not in inside:
                diags.append(error(_span(t), "E_LOOP_CROSSING",
                                   f"transition {t.source} -> {t.target} enters the"
                                   f" body of loop '{lp.start}'"))
            leaves = t.source in body and t.target not in body | {lp.end}
            if leaves:
                diags.append(error(_span(t), "E_LOOP_CROSSING",
                                   f"transition {t.source} -> {t.target} leaves the"
                                   f" body of loop '{lp.start}'"))
            if t.source == lp.start and t.target not in body | {lp.end}:
                diags.append(error(_span(t), "E_LOOP_CROSSING",
                                   f"start loop '{lp.start}' jumps outside its body"))
    if has_errors(diags):
        return loops, diags

    for a in loops:
        for b in loops:
            if a is b:
                continue
            ra, rb = a.region, b.region
            if ra & rb and not (ra <= rb or rb <= ra):
                diags.append(error(_span(starts[a.start]), "E_LOOP_OVERLAP",
                                   f"loops '{a.start}' and '{b.start}' overlap"
                                   f" without nesting"))
    return loops, diags


def _match_loops_phase(bundle: LinkedBundle, diags: list[Diagnostic]) -> None:
    if bundle.flow is None:
        return
    loops, loop_diags = match_loops(bundle.flow)
    diags.extend(loop_diags)
    bundle.loops = loops


def _enclosing_loops(bundle: LinkedBundle, step_name: str) -> list[LoopInfo]:
    """Loops whose body contains the step, outermost first."""
    inside = [lp for lp in bundle.loops if step_name in lp.body]
    return sorted(inside, key=lambda lp: -len(lp.region))


# ---------------------------------------------------------------------------
# phase: type environment, mapping and expression checks

def _attr_resolver(bundle: LinkedBundle):
    def resolve(type_name: str, attr: str) -> Optional[StaticType]:
        entry = bundle.types.get(type_name)
        if entry is None:
            return None
        td, dom = entry
        a = td.attribute(attr)
        if a is None:
            return None
        rt = resolve_type_ref(dom, a.type_ref)
        return StaticType(rt.basic, rt.type_name, rt.is_set)

    return resolve


def _static_of_resolved(rt) -> StaticType:
    return StaticType(rt.basic, rt.type_name, rt.is_set)


def _merge_types(a: StaticType, b: StaticType) -> Optional[StaticType]:
    if a == b:
        return a
    if not types_compatible(a, b):
        return None
    if a.is_set:
        ea, eb = a.element, b.element
        if ea.basic is None and ea.type_name is None:
            return b
        if eb.basic is None and eb.type_name is None:
            return a
        merged = _merge_types(ea, eb)
        return StaticType(merged.basic, merged.type_name, True) if merged else None
    if a.basic is not None and b.basic is not None and a.basic is not b.basic:
        return StaticType(BasicType.FLOAT)  # INTEGER/FLOAT mix promotes
    return a


def _unknown(t: StaticType) -> bool:
    return t.basic is None and t.type_name is None


def _assignable(src: StaticType, dst: StaticType) -> Optional[str]:
    """None when a src value can flow into dst; else the diagnostic code."""
    if src.is_set != dst.is_set:
        return "E_SET_SCALAR_MISMATCH"
    if src.is_set:
        se, de = src.element, dst.element
        if _unknown(se) or _unknown(de):
            return None
        inner = _assignable(se, de)
        return "E_TYPE_MISMATCH" if inner else None
    if _unknown(src) or _unknown(dst):
        return None  # an element of an empty set matches anything
    if src.type_name is not None or dst.type_name is not None:
        return None if src.type_name == dst.type_name else "E_TYPE_MISMATCH"
    if src.basic is dst.basic:
        return None
    if src.basic is BasicType.INTEGER and dst.basic is BasicType.FLOAT:
        return None
    return "E_TYPE_MISMATCH"


def _activity_endpoint_names(bundle: LinkedBundle, act: ActivityDef) -> set[str]:
    """Endpoint names an overwrite can target instead of a variable."""
    names: set[str] = set()
    for rel in act.relations:
        if isinstance(rel, ServiceRelation):
            entry = bundle.services.get(rel.service)
            if entry:
                names.update(p.name for p in entry[0].inputs)
        else:
            names.update(m.endpoint for m in rel.output_mappings)
    return names


def _check_types_and_mappings(bundle: LinkedBundle, diags: list[Diagnostic]) -> None:
    flow = bundle.flow
    if flow is None:
        return
    resolve_attr = _attr_resolver(bundle)
    env: dict[str, StaticType] = {}
    conflicts: list[Diagnostic] = []

    def produce(name: str, st: StaticType, span: SourceSpan):
        if name in env:
            merged = _merge_types(env[name], st)
            if merged is None:
                conflicts.append(error(
                    span, "E_TYPE_MISMATCH",
                    f"variable '{name}' is produced both as"
                    f" {env[name].describe()} and as {st.describe()}"))
                return
            env[name] = merged
        else:
            env[name] = st

    # pass 1: producers with declared types
    for step in flow.steps:
        if isinstance(step, RetrieveStep):
            if step.type_name in bundle.types:
                produce(step.target_variable,
                        StaticType(None, step.type_name, step.is_set), _span(step))
        elif isinstance(step, ActivityStep):
            entry = bundle.activities.get(step.activity)
            if entry is None:
                continue
            act, dom = entry
            endpoints = _activity_endpoint_names(bundle, act)
            for ow in step.overwrites:
                if ow.target not in endpoints:
                    produce(ow.target, static_of_value(ow.literal), _span(ow))
            for rel in act.relations:
                if isinstance(rel, ServiceRelation):
                    svc_entry = bundle.services.get(rel.service)
                    if svc_entry is None:
                        continue
                    svc, svc_dom = svc_entry
                    for m in rel.mappings:
                        if isinstance(m, ParameterMapping) and m.direction is Direction.OUT \
                                and len(m.path) == 1:
                            prm = svc.output(m.endpoint)
                            if prm is not None:
                                produce(m.path[0], _static_of_resolved(
                                    resolve_type_ref(svc_dom, prm.type_ref)), _span(m))
                else:
                    io_entry = bundle.ios.get(rel.io)
                    if io_entry is None:
                        continue
                    io, io_dom = io_entry
                    for m in rel.input_mappings:
                        if len(m.path) == 1:
                            v = io.variable(m.endpoint)
                            if v is not None:
                                produce(m.path[0], _static_of_resolved(
                                    resolve_type_ref(io_dom, v.type_ref)), _span(m))

    # pass 2 (twice): script lets and loop bindings, which read the environment
    loop_env: dict[str, dict[str, StaticType]] = {}
    for final in (False, True):
        for lp in bundle.loops:
            start = flow.step(lp.start)
            bindings: dict[str, StaticType] = {}
            try:
                outer = {}
                for enc in _enclosing_loops(bundle, lp.start):
                    outer.update(loop_env.get(f"loop:{enc.start}", {}))
                set_t = infer_path_type(start.data_flow_set, {**env, **outer}, resolve_attr)
                if not set_t.is_set:
                    if final:
                        diags.append(error(_span(start), "E_TYPE_MISMATCH",
                                           f"loop '{lp.start}' iterates over"
                                           f" {set_t.describe()}, which is not a set"))
                else:
                    bindings[lp.loop_name] = set_t.element
            except ExprTypeError as exc:
                if final and exc.code != "E_UNREACHABLE_VARIABLE":
                    diags.append(error(_span(start), exc.code, exc.message))
            bindings[f"{lp.loop_name}_index"] = StaticType(BasicType.INTEGER)
            loop_env[f"loop:{lp.start}"] = bindings
        for step in flow.steps:
            if not isinstance(step, ScriptStep):
                continue
            step_env = _env_at(bundle, env, loop_env, step.name)
            local: dict[str, StaticType] = {}
            for stmt in step.script.statements:
                if isinstance(stmt, LetStmt):
                    try:
                        t = infer_expr_type(stmt.expr, {**step_env, **local}, resolve_attr)
                        local[stmt.name] = t
                        produce(stmt.name, t, _span(stmt))
                    except ExprTypeError:
                        pass  # reported in the statement check below
                elif isinstance(stmt, AppendStmt) and len(stmt.path) == 1:
                    # appending refines an empty-set let to a concrete element kind
                    try:
                        t = infer_expr_type(stmt.expr, {**step_env, **local}, resolve_attr)
                    except ExprTypeError:
                        continue
                    cur = {**step_env, **local}.get(stmt.path[0])
                    if cur is not None and cur.is_set:
                        merged = _merge_types(cur, StaticType(t.basic, t.type_name, True))
                        if merged is not None:
                            local[stmt.path[0]] = merged
                            produce(stmt.path[0], merged, _span(stmt))
                elif isinstance(stmt, RenameStmt):
                    src = {**step_env, **local}.get(stmt.old)
                    if src is not None:
                        local[stmt.new] = src
                        produce(stmt.new, src, _span(stmt))

    diags.extend(conflicts)
    bundle.var_types = env
    bundle.loop_env = loop_env

    # mapping, criterion, condition and script checks against the environment
    for step in flow.steps:
        step_env = _env_at(bundle, env, loop_env, step.name)
        if isinstance(step, ActivityStep):
            _check_activity_step(bundle, step, step_env, resolve_attr, diags)
        elif isinstance(step, (RetrieveStep, DeleteStep)):
            _check_criteria(bundle, step, step_env, resolve_attr, diags)
        elif isinstance(step, StoreStep):
            for var in step.variables:
                t = step_env.get(var)
                if t is not None and t.type_name is None:
                    diags.append(error(_span(step), "E_TYPE_MISMATCH",
                                       f"store step '{step.name}': variable '{var}'"
                                       f" is {t.describe()}, not a record"))
        elif isinstance(step, ScriptStep):
            _check_script(step, step_env, resolve_attr, diags)
    for t in flow.transitions:
        if t.condition is None:
            continue
        src_env = _env_at(bundle, env, loop_env, t.source)
        try:
            ct = infer_expr_type(t.condition, src_env, resolve_attr)
            if ct != StaticType(BasicType.BOOLEAN):
                diags.append(error(_span(t), "E_TYPE_MISMATCH",
                                   f"condition on {t.source} -> {t.target} is"
                                   f" {ct.describe()}, expected BOOLEAN"))
        except ExprTypeError as exc:
            if exc.code != "E_UNREACHABLE_VARIABLE":
                diags.append(error(_span(t), exc.code, exc.message))


def _env_at(bundle: LinkedBundle, env, loop_env, step_name: str) -> dict[str, StaticType]:
    out = dict(env)
    for lp in _enclosing_loops(bundle, step_name):
        out.update(loop_env.get(f"loop:{lp.start}", {}))
    return out


def _check_activity_step(bundle: LinkedBundle, step: ActivityStep, env,
                         resolve_attr, diags: list[Diagnostic]) -> None:
    entry = bundle.activities.get(step.activity)
    if entry is None:
        return
    act, _dom = entry
    endpoints = _activity_endpoint_names(bundle, act)
    endpoint_types = _endpoint_types(bundle, act)
    for ow in step.overwrites:
        lit_t = static_of_value(ow.literal)
        if ow.target in endpoints:
            dst = endpoint_types.get(ow.target)
            if dst is not None:
                _assign_diag(lit_t, dst, _span(ow),
                             f"overwrite of endpoint '{ow.target}'", diags)
        elif ow.target in env:
            _assign_diag(lit_t, env[ow.target], _span(ow),
                         f"overwrite of variable '{ow.target}'", diags)
    for rel in act.relations:
        if isinstance(rel, ServiceRelation):
            svc_entry = bundle.services.get(rel.service)
            if svc_entry is None:
                continue
            svc, svc_dom = svc_entry
            for m in rel.mappings:
                if isinstance(m, ValueMapping):
                    prm = svc.input(m.endpoint)
                    if prm is not None:
                        _assign_diag(static_of_value(m.literal),
                                     _static_of_resolved(resolve_type_ref(svc_dom, prm.type_ref)),
                                     _span(m), f"parameter '{m.endpoint}'", diags)
                elif m.direction is Direction.IN:
                    prm = svc.input(m.endpoint)
                    if prm is None:
                        continue
                    _path_assign_diag(bundle, m.path, env, resolve_attr,
                                      _static_of_resolved(resolve_type_ref(svc_dom, prm.type_ref)),
                                      _span(m), f"parameter '{m.endpoint}'", diags, into=True)
                else:
                    prm = svc.output(m.endpoint)
                    if prm is None or len(m.path) == 1:
                        continue  # single-segment writes define the variable
                    _path_assign_diag(bundle, m.path, env, resolve_attr,
                                      _static_of_resolved(resolve_type_ref(svc_dom, prm.type_ref)),
                                      _span(m), f"output '{m.endpoint}'", diags, into=False)
        else:
            io_entry = bundle.ios.get(rel.io)
            if io_entry is None:
                continue
            io, io_dom = io_entry
            for m in rel.output_mappings:
                v = io.variable(m.endpoint)
                if v is None:
                    continue
                dst = _static_of_resolved(resolve_type_ref(io_dom, v.type_ref))
                if isinstance(m, ValueMapping):
                    _assign_diag(static_of_value(m.literal), dst, _span(m),
                                 f"io variable '{m.endpoint}'", diags)
                else:
                    _path_assign_diag(bundle, m.path, env, resolve_attr, dst,
                                      _span(m), f"io variable '{m.endpoint}'", diags,
                                      into=True)
            for m in rel.input_mappings:
                v = io.variable(m.endpoint)
                if v is None or len(m.path) == 1:
                    continue
                _path_assign_diag(bundle, m.path, env, resolve_attr,
                                  _static_of_resolved(resolve_type_ref(io_dom, v.type_ref)),
                                  _span(m), f"io variable '{m.endpoint}'", diags,
                                  into=False)


def _endpoint_types(bundle: LinkedBundle, act: ActivityDef) -> dict[str, StaticType]:
    out: dict[str, StaticType] = {}
    for rel in act.relations:
        if isinstance(rel, ServiceRelation):
            entry = bundle.services.get(rel.service)
            if entry:
                svc, dom = entry
                for p in svc.inputs:
                    out[p.name] = _static_of_resolved(resolve_type_ref(dom, p.type_ref))
        else:
            entry = bundle.ios.get(rel.io)
            if entry:
                io, dom = entry
                for m in rel.output_mappings:
                    v = io.variable(m.endpoint)
                    if v is not None:
                        out[m.endpoint] = _static_of_resolved(resolve_type_ref(dom, v.type_ref))
    return out


def _assign_diag(src: StaticType, dst: StaticType, span: SourceSpan, what: str,
                 diags: list[Diagnostic]) -> None:
    code = _assignable(src, dst)
    if code is not None:
        diags.append(error(span, code,
                           f"{what} expects {dst.describe()}, got {src.describe()}"))


def _path_assign_diag(bundle, path, env, resolve_attr, other: StaticType,
                      span: SourceSpan, what: str, diags: list[Diagnostic], *,
                      into: bool) -> None:
    """Check a path type against an endpoint type (direction per ``into``)."""
    try:
        pt = infer_path_type(path, env, resolve_attr)
    except ExprTypeError as exc:
        if exc.code != "E_UNREACHABLE_VARIABLE":  # visibility reports those
            diags.append(error(span, exc.code, exc.message))
        return
    if into:
        _assign_diag(pt, other, span, what, diags)
    else:
        _assign_diag(other, pt, span, what, diags)


def _check_criteria(bundle: LinkedBundle, step, env, resolve_attr,
                    diags: list[Diagnostic]) -> None:
    entry = bundle.types.get(step.type_name)
    if entry is None:
        return
    td, dom = entry
    for crit in step.criteria:
        field_t = _entity_field_type(bundle, td, dom, crit.field_path)
        if field_t is None:
            diags.append(error(_span(crit), "E_BAD_PATH",
                               f"type '{td.name}' has no field"
                               f" '{'.'.join(crit.field_path)}'"))
            continue
        if crit.literal is not None:
            value_t = static_of_value(crit.literal)
        else:
            try:
                value_t = infer_path_type(crit.value_path, env, resolve_attr)
            except ExprTypeError as exc:
                if exc.code != "E_UNREACHABLE_VARIABLE":
                    diags.append(error(_span(crit), exc.code, exc.message))
                continue
        if value_t.is_set:
            diags.append(error(_span(crit), "E_SET_SCALAR_MISMATCH",
                               "criterion values must be scalars"))
            continue
        if crit.op is CriterionOp.CONTAINS:
            if field_t.is_set:
                _assign_diag(value_t, field_t.element, _span(crit),
                             "contains criterion", diags)
            elif field_t.basic is BasicType.STRING:
                _assign_diag(value_t, field_t, _span(crit), "contains criterion", diags)
            else:
                diags.append(error(_span(crit), "E_TYPE_MISMATCH",
                                   f"contains needs a set or STRING field,"
                                   f" '{'.'.join(crit.field_path)}' is"
                                   f" {field_t.describe()}"))
            continue
        if field_t.is_set:
            diags.append(error(_span(crit), "E_SET_SCALAR_MISMATCH",
                               f"operator {crit.op.value} cannot apply to set field"
                               f" '{'.'.join(crit.field_path)}'"))
            continue
        if crit.op in (CriterionOp.LT, CriterionOp.LTE, CriterionOp.GT, CriterionOp.GTE) \
                and field_t.basic not in (BasicType.INTEGER, BasicType.FLOAT,
                                          BasicType.STRING, BasicType.DATE):
            diags.append(error(_span(crit), "E_TYPE_MISMATCH",
                               f"operator {crit.op.value} needs an ordered field"))
            continue
        _assign_diag(value_t, field_t, _span(crit), "criterion value", diags)


def _entity_field_type(bundle: LinkedBundle, td: TypeDef, dom: DomainModel,
                       path) -> Optional[StaticType]:
    current_td, current_dom = td, dom
    result: Optional[StaticType] = None
    for i, seg in enumerate(path):
        if result is not None:  # descending below a leaf or through a set
            return None
        attr = current_td.attribute(seg)
        if attr is None:
            return None
        rt = resolve_type_ref(current_dom, attr.type_ref)
        if rt.type_def is not None and not rt.is_set and i + 1 < len(path):
            entry = bundle.types.get(rt.type_def.name)
            current_td, current_dom = entry if entry else (rt.type_def, current_dom)
            continue
        result = StaticType(rt.basic, rt.type_name, rt.is_set)
    return result


def _check_script(step: ScriptStep, env, resolve_attr, diags: list[Diagnostic]) -> None:
    local = dict(env)
    for stmt in step.script.statements:
        try:
            if isinstance(stmt, LetStmt):
                local[stmt.name] = infer_expr_type(stmt.expr, local, resolve_attr)
            elif isinstance(stmt, AssignStmt):
                t = infer_expr_type(stmt.expr, local, resolve_attr)
                if stmt.path[0] in local:
                    dst = infer_path_type(stmt.path, local, resolve_attr)
                    _assign_diag(t, dst, _span(stmt),
                                 f"assignment to '{'.'.join(stmt.path)}'", diags)
            elif isinstance(stmt, AppendStmt):
                t = infer_expr_type(stmt.expr, local, resolve_attr)
                if stmt.path[0] in local:
                    dst = infer_path_type(stmt.path, local, resolve_attr)
                    if not dst.is_set:
                        diags.append(error(_span(stmt), "E_TYPE_MISMATCH",
                                           f"append target '{'.'.join(stmt.path)}' is"
                                           f" {dst.describe()}, not a set"))
                    else:
                        _assign_diag(t, dst.element, _span(stmt), "appended value", diags)
                        merged = _merge_types(dst, StaticType(t.basic, t.type_name, True))
                        if merged is not None:
                            local[stmt.path[0]] = merged
            elif isinstance(stmt, RenameStmt):
                if stmt.old in local:
                    local[stmt.new] = local[stmt.old]
        except ExprTypeError as exc:
            if exc.code != "E_UNREACHABLE_VARIABLE":
                diags.append(error(_span(stmt), exc.code, exc.message))


# ---------------------------------------------------------------------------
# phase: data-flow visibility

@dataclass
class _Read:
    node: str
    var: str
    span: SourceSpan
    what: str
    on_edge: bool = False  # condition reads check the source's out set


def check_dataflow_visibility(bundle: LinkedBundle,
                              external_vars: Optional[dict[str, StaticType]] = None
                              ) -> list[Diagnostic]:
    """Report reads no producing path reaches (error) or only some do (warning).

    The analysis runs over the transition graph plus one synthetic edge
    per loop (start to end: the zero-iteration path). Names first bound
    inside a loop body live in the loop frame and die at the end step.
    """
    diags: list[Diagnostic] = []
    flow = bundle.flow
    if flow is None or bundle.inferred_start is None:
        return diags
    external = set(external_vars or {})

    gens: dict[str, list[str]] = {}
    reads: list[_Read] = []
    for step in flow.steps:
        g, r = _step_gens_reads(bundle, step)
        gens[step.name] = g
        reads.extend(r)
    for t in flow.transitions:
        if t.condition is not None:
            for path in collect_paths(t.condition):
                reads.append(_Read(t.source, path[0], _span(t),
                                   f"condition on {t.source} -> {t.target}",
                                   on_edge=True))

    kills: dict[str, set[str]] = {s.name: set() for s in flow.steps}
    for step in flow.steps:
        if isinstance(step, ScriptStep):
            for stmt in step.script.statements:
                if isinstance(stmt, RenameStmt):
                    kills[step.name].add(stmt.old)
    for lp in bundle.loops:
        # an enclosing loop with the same element name keeps it bound after pop
        shadowed = {enc.loop_name for enc in _enclosing_loops(bundle, lp.start)}
        if lp.loop_name not in shadowed:
            kills[lp.end].update({lp.loop_name, f"{lp.loop_name}_index"})

    succ: dict[str, set[str]] = {s.name: set() for s in flow.steps}
    pred: dict[str, set[str]] = {s.name: set() for s in flow.steps}
    for t in flow.transitions:
        succ[t.source].add(t.target)
        pred[t.target].add(t.source)
    for lp in bundle.loops:  # zero-iteration bypass
        succ[lp.start].add(lp.end)
        pred[lp.end].add(lp.start)

    start = bundle.inferred_start
    reachable = {start}
    stack = [start]
    while stack:
        for nxt in succ[stack.pop()]:
            if nxt not in reachable:
                reachable.add(nxt)
                stack.append(nxt)
    for step in flow.steps:
        if step.name not in reachable and not isinstance(step, StartStep):
            diags.append(warning(_span(step), "W_UNREACHABLE_STEP",
                                 f"step '{step.name}' is unreachable from the start"))

    universe = set(external)
    for g in gens.values():
        universe.update(g)

    def run_must(extra_kills: dict[str, set[str]]) -> tuple[dict, dict]:
        must_in = {n: set() for n in reachable}
        must_out = {n: set(universe) for n in reachable}
        changed = True
        while changed:
            changed = False
            for n in reachable:
                preds_in = [must_out[p] for p in pred[n] if p in reachable]
                if n == start:
                    preds_in.append(set(external))
                if preds_in:
                    new_in = set.intersection(*preds_in)
                else:
                    new_in = set()
                new_out = (new_in | set(gens[n])) - kills[n] - extra_kills.get(n, set())
                if new_in != must_in[n] or new_out != must_out[n]:
                    must_in[n], must_out[n] = new_in, new_out
                    changed = True
        return must_in, must_out

    # names first bound inside a loop body die with the loop frame; finding
    # them needs availability-at-entry, which itself depends on kills, so
    # iterate until the kill sets stop growing
    extra_kills: dict[str, set[str]] = {}
    for _ in range(len(bundle.loops) + 1):
        must_in, must_out = run_must(extra_kills)
        grew = False
        for lp in bundle.loops:
            if lp.start not in reachable:
                continue
            body_gens: set[str] = set()
            for s in lp.body:
                body_gens.update(gens.get(s, ()))
            avail_at_entry = must_out[lp.start]
            local = body_gens - avail_at_entry
            current = extra_kills.setdefault(lp.end, set())
            if not local <= current:
                current |= local
                grew = True
        if not grew:
            break
    must_in, must_out = run_must(extra_kills)

    may_in = {n: set() for n in reachable}
    may_out = {n: set() for n in reachable}
    changed = True
    while changed:
        changed = False
        for n in reachable:
            new_in = set(external) if n == start else set()
            for p in pred[n]:
                if p in reachable:
                    new_in |= may_out[p]
            new_out = (new_in | set(gens[n])) - kills[n] - extra_kills.get(n, set())
            if new_in != may_in[n] or new_out != may_out[n]:
                may_in[n], may_out[n] = new_in, new_out
                changed = True

    for read in reads:
        if read.node not in reachable:
            continue
        must = must_out[read.node] if read.on_edge else must_in[read.node]
        may = may_out[read.node] if read.on_edge else may_in[read.node]
        if read.var in must:
            continue
        if read.var in may:
            diags.append(warning(read.span, "W_PARTIALLY_DEFINED_VARIABLE",
                                 f"{read.what} reads '{read.var}', which is only"
                                 f" produced on some paths"))
        else:
            diags.append(error(read.span, "E_UNREACHABLE_VARIABLE",
                               f"{read.what} reads '{read.var}', but no producing"
                               f" step reaches it"))
    return diags


def _step_gens_reads(bundle: LinkedBundle, step: Step) -> tuple[list[str], list[_Read]]:
    gens: list[str] = []
    reads: list[_Read] = []
    local: set[str] = set()

    def gen(name: str):
        local.add(name)
        gens.append(name)

    def read(path, what: str, span):
        if path[0] not in local:
            reads.append(_Read(step.name, path[0], span or _FALLBACK_SPAN, what))

    if isinstance(step, ActivityStep):
        entry = bundle.activities.get(step.activity)
        if entry is None:
            return gens, reads
        act, _dom = entry
        endpoints = _activity_endpoint_names(bundle, act)
        for ow in step.overwrites:
            if ow.target not in endpoints:
                gen(ow.target)
        for rel in act.relations:
            if isinstance(rel, ServiceRelation):
                for m in rel.mappings:
                    if isinstance(m, ParameterMapping) and m.direction is Direction.IN:
                        read(m.path, f"step '{step.name}'", _span(m))
                for m in rel.mappings:
                    if isinstance(m, ParameterMapping) and m.direction is Direction.OUT:
                        if len(m.path) == 1:
                            gen(m.path[0])
                        else:
                            read(m.path, f"step '{step.name}'", _span(m))
            else:
                for m in rel.output_mappings:
                    if isinstance(m, ParameterMapping):
                        read(m.path, f"step '{step.name}'", _span(m))
                for m in rel.input_mappings:
                    if len(m.path) == 1:
                        gen(m.path[0])
                    else:
                        read(m.path, f"step '{step.name}'", _span(m))
    elif isinstance(step, RetrieveStep):
        for crit in step.criteria:
            if crit.value_path is not None:
                read(crit.value_path, f"step '{step.name}'", _span(crit))
        gen(step.target_variable)
    elif isinstance(step, DeleteStep):
        for crit in step.criteria:
            if crit.value_path is not None:
                read(crit.value_path, f"step '{step.name}'", _span(crit))
    elif isinstance(step, StoreStep):
        for var in step.variables:
            read((var,), f"step '{step.name}'", _span(step))
    elif isinstance(step, ScriptStep):
        killed: set[str] = set()
        for stmt in step.script.statements:
            exprs = []
            if isinstance(stmt, (LetStmt, AssignStmt, AppendStmt)):
                exprs.append(stmt.expr)
            for e in exprs:
                for path in collect_paths(e):
                    if path[0] not in killed:
                        read(path, f"step '{step.name}'", _span(stmt))
            if isinstance(stmt, LetStmt):
                gen(stmt.name)
                killed.discard(stmt.name)
            elif isinstance(stmt, AssignStmt):
                if stmt.path[0] not in killed:
                    read(stmt.path, f"step '{step.name}'", _span(stmt))
            elif isinstance(stmt, AppendStmt):
                if stmt.path[0] not in killed:
                    read(stmt.path, f"step '{step.name}'", _span(stmt))
            elif isinstance(stmt, RenameStmt):
                if stmt.old not in killed:
                    read((stmt.old,), f"step '{step.name}'", _span(stmt))
                killed.add(stmt.old)
                local.discard(stmt.old)
                gen(stmt.new)
                killed.discard(stmt.new)
    elif isinstance(step, StartLoopStep):
        read(step.data_flow_set, f"loop '{step.name}'", _span(step))
        gen(step.loop_name)
        gen(f"{step.loop_name}_index")
    return gens, reads


def _check_visibility(bundle: LinkedBundle, diags: list[Diagnostic],
                      external_vars: dict[str, StaticType]) -> None:
    diags.extend(check_dataflow_visibility(bundle, external_vars))
