"""Recursive-descent parsers for the .domain, .abr and .flow languages.

Parsers are total: any input produces either a model or error
diagnostics, never an exception. Parse errors recover at item
boundaries so one file can report several problems. Diagnostics render
as ``file:line:col: severity[CODE] message``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import AbstractSet, Optional

from . import expr as ex
from .lexer import Token, TokenStream, tokenize
from .model import (
    AbrModel,
    ActivityDef,
    ActivityStep,
    AttrDef,
    BUILTIN_KINDS,
    DeleteStep,
    Direction,
    DomainModel,
    EndLoopStep,
    FlowCriterion,
    FlowModel,
    GenericImplementation,
    HttpMethod,
    IoDef,
    IoRelation,
    IoVariable,
    MockImplementation,
    Overwrite,
    Param,
    ParameterMapping,
    ProcessImplementation,
    RestImplementation,
    RestPlace,
    RetrieveStep,
    CriterionOp,
    ScriptStep,
    ServiceBinding,
    ServiceDef,
    ServiceParameter,
    ServiceRelation,
    StartLoopStep,
    StartStep,
    Step,
    StoreStep,
    Transition,
    TypeDef,
    TypeRef,
    ValueMapping,
)
from .source import Diagnostic, SourceSpan, error, has_errors
from .values import BASIC_TYPE_NAMES, BasicType

_CRITERION_OPS = {
    "==": CriterionOp.EQ,
    "!=": CriterionOp.NEQ,
    "<": CriterionOp.LT,
    "<=": CriterionOp.LTE,
    ">": CriterionOp.GT,
    ">=": CriterionOp.GTE,
}

_FLOW_ITEM_WORDS = frozenset({
    "start", "step", "retrieve", "store", "delete", "script",
    "startloop", "endloop", "loop",
})


@dataclass
class ParseResult:
    model: object | None
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return self.model is not None and not has_errors(self.diagnostics)

    def render_diagnostics(self) -> str:
        return "\n".join(d.render() for d in self.diagnostics)


class _Abort(Exception):
    """Internal: unwind to the nearest recovery point."""


class _Parser:
    def __init__(self, text: str, file: str):
        tokens, lex_diags = tokenize(text, file)
        self.s = TokenStream(tokens)
        self.diags: list[Diagnostic] = list(lex_diags)
        self.file = file

    # -- diagnostics -------------------------------------------------------

    def err(self, span: SourceSpan, code: str, message: str) -> None:
        self.diags.append(error(span, code, message))

    def fail(self, span: SourceSpan, code: str, message: str):
        self.err(span, code, message)
        raise _Abort()

    # -- token helpers -----------------------------------------------------

    def expect_op(self, op: str) -> Token:
        t = self.s.peek()
        if not self.s.at_op(op):
            self.fail(t.span, "E_SYNTAX", f"expected '{op}', found {t.text or 'end of input'!r}")
        return self.s.next()

    def expect_word(self, word: str) -> Token:
        t = self.s.peek()
        if not self.s.at_word(word):
            self.fail(t.span, "E_SYNTAX", f"expected '{word}', found {t.text or 'end of input'!r}")
        return self.s.next()

    def expect_ident(self, what: str = "name") -> Token:
        t = self.s.peek()
        if t.kind != "ident":
            self.fail(t.span, "E_SYNTAX", f"expected {what}, found {t.text or 'end of input'!r}")
        return self.s.next()

    def expect_string(self, what: str = "string") -> Token:
        t = self.s.peek()
        if t.kind != "string":
            self.fail(t.span, "E_SYNTAX", f"expected {what}, found {t.text or 'end of input'!r}")
        return self.s.next()

    def expect_int(self, what: str = "integer") -> Token:
        t = self.s.peek()
        if t.kind != "int":
            self.fail(t.span, "E_SYNTAX", f"expected {what}, found {t.text or 'end of input'!r}")
        return self.s.next()

    def literal(self):
        try:
            return ex.parse_literal(self.s)
        except ex.ExprSyntaxError as e:
            self.fail(e.span, "E_SYNTAX", e.message)

    def path(self):
        try:
            return ex.parse_path(self.s)
        except ex.ExprSyntaxError as e:
            self.fail(e.span, "E_SYNTAX", e.message)

    def expression(self):
        try:
            return ex.parse_expression(self.s)
        except ex.ExprSyntaxError as e:
            self.fail(e.span, "E_SYNTAX", e.message)

    def sync(self, item_words: frozenset[str]) -> None:
        """Skip to the next item keyword or closing brace at this nesting level."""
        depth = 0
        while not self.s.at_eof():
            t = self.s.peek()
            if t.kind == "op" and t.text == "{":
                depth += 1
            elif t.kind == "op" and t.text == "}":
                if depth == 0:
                    return
                depth -= 1
            elif depth == 0 and t.kind == "ident" and t.text in item_words:
                return
            self.s.next()

    def finish_block(self) -> None:
        t = self.s.peek()
        if not self.s.take_op("}"):
            self.err(t.span, "E_SYNTAX", "expected '}'")

    def no_trailing(self) -> None:
        t = self.s.peek()
        if t.kind != "eof":
            self.err(t.span, "E_SYNTAX", f"unexpected input after model: {t.text!r}")

    def check_unique(self, what: str, named: list) -> None:
        seen: dict[str, SourceSpan] = {}
        for el in named:
            if el.name in seen:
                self.err(el.span, "E_DUPLICATE_NAME",
                         f"duplicate {what} '{el.name}'")
            else:
                seen[el.name] = el.span

    def type_ref(self) -> TypeRef:
        is_set = self.s.take_word("set") is not None
        t = self.expect_ident("type name")
        target: BasicType | str
        if t.text in BASIC_TYPE_NAMES:
            target = BasicType(t.text)
        else:
            target = t.text
        return TypeRef(target, is_set, t.span)


# ---------------------------------------------------------------------------
# .domain

_DOMAIN_ITEMS = frozenset({"type", "service", "io", "activity"})


def parse_domain(text: str, file: str = "<domain>") -> ParseResult:
    p = _Parser(text, file)
    model: Optional[DomainModel] = None
    try:
        model = _domain(p)
    except _Abort:
        pass
    if has_errors(p.diags):
        model = None
    return ParseResult(model, p.diags)


def _domain(p: _Parser) -> DomainModel:
    kw = p.expect_word("domain")
    name = p.expect_ident("domain name")
    model = DomainModel(name.text, span=kw.span)
    p.expect_op("{")
    while not p.s.at_eof() and not p.s.at_op("}"):
        try:
            if p.s.at_word("type"):
                model.types.append(_type_decl(p))
            elif p.s.at_word("service"):
                model.services.append(_service_decl(p))
            elif p.s.at_word("io"):
                model.ios.append(_io_decl(p))
            elif p.s.at_word("activity"):
                model.activities.append(_activity_decl(p))
            else:
                t = p.s.peek()
                p.fail(t.span, "E_SYNTAX",
                       f"expected type/service/io/activity, found {t.text!r}")
        except _Abort:
            p.sync(_DOMAIN_ITEMS)
    p.finish_block()
    p.no_trailing()
    p.check_unique("type", model.types)
    p.check_unique("service", model.services)
    p.check_unique("io", model.ios)
    p.check_unique("activity", model.activities)
    return model


def _type_decl(p: _Parser) -> TypeDef:
    kw = p.expect_word("type")
    name = p.expect_ident("type name")
    if name.text in BASIC_TYPE_NAMES:
        p.err(name.span, "E_RESERVED_NAME", f"cannot redefine basic type {name.text}")
    td = TypeDef(name.text, span=kw.span)
    p.expect_op("{")
    while not p.s.at_eof() and not p.s.at_op("}"):
        attr = p.expect_ident("attribute name")
        p.expect_op(":")
        td.attributes.append(AttrDef(attr.text, p.type_ref(), attr.span))
    p.finish_block()
    p.check_unique("attribute", td.attributes)
    return td


def _service_decl(p: _Parser) -> ServiceDef:
    kw = p.expect_word("service")
    name = p.expect_ident("service name")
    svc = ServiceDef(name.text, span=kw.span)
    p.expect_op("{")
    while not p.s.at_eof() and not p.s.at_op("}"):
        t = p.s.peek()
        if p.s.take_word("in"):
            target = svc.inputs
        elif p.s.take_word("out"):
            target = svc.outputs
        else:
            p.fail(t.span, "E_SYNTAX", f"expected in/out parameter, found {t.text!r}")
        pname = p.expect_ident("parameter name")
        p.expect_op(":")
        target.append(Param(pname.text, p.type_ref(), pname.span))
    p.finish_block()
    p.check_unique("parameter", svc.inputs + svc.outputs)
    return svc


def _io_decl(p: _Parser) -> IoDef:
    kw = p.expect_word("io")
    name = p.expect_ident("io name")
    io = IoDef(name.text, span=kw.span)
    p.expect_op("{")
    while not p.s.at_eof() and not p.s.at_op("}"):
        t = p.s.peek()
        if p.s.take_word("in"):
            direction = Direction.IN
        elif p.s.take_word("out"):
            direction = Direction.OUT
        else:
            p.fail(t.span, "E_SYNTAX", f"expected in/out variable, found {t.text!r}")
        vname = p.expect_ident("variable name")
        p.expect_op(":")
        io.variables.append(IoVariable(vname.text, p.type_ref(), direction, vname.span))
    p.finish_block()
    p.check_unique("variable", io.variables)
    return io


def _activity_decl(p: _Parser) -> ActivityDef:
    kw = p.expect_word("activity")
    name = p.expect_ident("activity name")
    act = ActivityDef(name.text, span=kw.span)
    p.expect_op("{")
    while not p.s.at_eof() and not p.s.at_op("}"):
        t = p.s.peek()
        if p.s.at_word("call"):
            act.relations.append(_service_relation(p))
        elif p.s.at_word("io"):
            act.relations.append(_io_relation(p))
        else:
            p.fail(t.span, "E_SYNTAX", f"expected call/io relation, found {t.text!r}")
    p.finish_block()
    return act


def _service_relation(p: _Parser) -> ServiceRelation:
    kw = p.expect_word("call")
    svc = p.expect_ident("service name")
    rel = ServiceRelation(svc.text, span=kw.span)
    p.expect_op("{")
    while not p.s.at_eof() and not p.s.at_op("}"):
        endpoint = p.expect_ident("parameter name")
        if p.s.take_op("<-"):
            rel.mappings.append(ParameterMapping(endpoint.text, p.path(),
                                                 Direction.IN, endpoint.span))
        elif p.s.take_op("="):
            rel.mappings.append(ValueMapping(endpoint.text, p.literal(), endpoint.span))
        elif p.s.take_op("->"):
            rel.mappings.append(ParameterMapping(endpoint.text, p.path(),
                                                 Direction.OUT, endpoint.span))
        else:
            t = p.s.peek()
            p.fail(t.span, "E_SYNTAX",
                   f"expected '<-', '=' or '->' after parameter, found {t.text!r}")
    p.finish_block()
    return rel


def _io_relation(p: _Parser) -> IoRelation:
    kw = p.expect_word("io")
    io = p.expect_ident("io name")
    rel = IoRelation(io.text, span=kw.span)
    p.expect_op("{")
    while not p.s.at_eof() and not p.s.at_op("}"):
        t = p.s.peek()
        if p.s.take_word("show"):
            endpoint = p.expect_ident("io variable name")
            if p.s.take_op("<-"):
                rel.output_mappings.append(
                    ParameterMapping(endpoint.text, p.path(), Direction.IN, endpoint.span))
            elif p.s.take_op("="):
                rel.output_mappings.append(
                    ValueMapping(endpoint.text, p.literal(), endpoint.span))
            else:
                n = p.s.peek()
                p.fail(n.span, "E_SYNTAX", f"expected '<-' or '=' after show, found {n.text!r}")
        elif p.s.take_word("ask"):
            endpoint = p.expect_ident("io variable name")
            p.expect_op("->")
            rel.input_mappings.append(
                ParameterMapping(endpoint.text, p.path(), Direction.OUT, endpoint.span))
        else:
            p.fail(t.span, "E_SYNTAX", f"expected show/ask mapping, found {t.text!r}")
    p.finish_block()
    return rel


# ---------------------------------------------------------------------------
# .abr

def parse_abr(text: str, file: str = "<abr>",
              known_kinds: AbstractSet[str] = BUILTIN_KINDS) -> ParseResult:
    p = _Parser(text, file)
    model: Optional[AbrModel] = None
    try:
        model = _abr(p, known_kinds)
    except _Abort:
        pass
    if has_errors(p.diags):
        model = None
    return ParseResult(model, p.diags)


def _abr(p: _Parser, known_kinds: AbstractSet[str]) -> AbrModel:
    kw = p.expect_word("bindings")
    name = p.expect_ident("bindings name")
    p.expect_word("for")
    domain = p.expect_ident("domain name")
    model = AbrModel(name.text, domain.text, span=kw.span)
    p.expect_op("{")
    while not p.s.at_eof() and not p.s.at_op("}"):
        try:
            model.bindings.append(_binding(p, known_kinds))
        except _Abort:
            p.sync(frozenset({"implement"}))
    p.finish_block()
    p.no_trailing()
    # one implementation per service within one bindings model
    seen: dict[str, SourceSpan] = {}
    for b in model.bindings:
        if b.service in seen:
            p.err(b.span, "E_DUPLICATE_NAME",
                  f"service '{b.service}' is bound more than once")
        seen[b.service] = b.span
    return model


def _binding(p: _Parser, known_kinds: AbstractSet[str]) -> ServiceBinding:
    kw = p.expect_word("implement")
    svc = p.expect_ident("service name")
    p.expect_word("as")
    kind = p.expect_ident("implementation kind")
    if kind.text not in known_kinds:
        p.err(kind.span, "E_UNKNOWN_KIND",
              f"unknown implementation kind '{kind.text}'"
              f" (known: {', '.join(sorted(known_kinds))})")
    binding = ServiceBinding(svc.text, None, span=kw.span)
    p.expect_op("{")
    if kind.text == "REST":
        binding.implementation = _rest_impl(p, binding, kind.span)
    elif kind.text == "PROCESS":
        binding.implementation = _process_impl(p, binding, kind.span)
    elif kind.text == "MOCK":
        binding.implementation = _mock_impl(p, binding, kind.span)
    else:
        binding.implementation = _generic_impl(p, binding, kind.text, kind.span)
    p.finish_block()
    seen_params: set[str] = set()
    for sp in binding.parameters:
        if sp.abstract_name in seen_params:
            p.err(sp.span or kw.span, "E_DUPLICATE_NAME",
                  f"parameter '{sp.abstract_name}' is mapped more than once")
        seen_params.add(sp.abstract_name)
    return binding


def _param_line(p: _Parser, binding: ServiceBinding, concrete_is_path: bool,
                direction: Direction, rest_places: dict | None = None) -> None:
    abstract = p.expect_ident("abstract parameter name")
    arrow = "->" if direction is Direction.IN else "<-"
    p.expect_op(arrow)
    place = None
    if rest_places is not None:
        place_tok = p.expect_ident("parameter location (path/query/body)")
        try:
            place = RestPlace(place_tok.text)
        except ValueError:
            p.fail(place_tok.span, "E_SYNTAX",
                   f"expected path/query/body, found {place_tok.text!r}")
        if direction is Direction.OUT and place is not RestPlace.BODY:
            p.fail(place_tok.span, "E_SYNTAX", "results can only come from the body")
    concrete = ".".join(p.path()) if concrete_is_path else p.expect_ident("concrete name").text
    binding.parameters.append(ServiceParameter(abstract.text, concrete, direction, abstract.span))
    if rest_places is not None and direction is Direction.IN:
        rest_places[abstract.text] = place  # results always come from the body


def _rest_impl(p: _Parser, binding: ServiceBinding, span: SourceSpan) -> RestImplementation:
    method: HttpMethod | None = None
    url: str | None = None
    timeout = None
    headers: list[tuple[str, str]] = []
    places: dict[str, RestPlace] = {}
    while not p.s.at_eof() and not p.s.at_op("}"):
        t = p.s.peek()
        if p.s.take_word("method"):
            m = p.expect_ident("HTTP method")
            try:
                method = HttpMethod(m.text)
            except ValueError:
                p.fail(m.span, "E_SYNTAX", f"unsupported HTTP method {m.text!r}")
        elif p.s.take_word("url"):
            url = p.expect_string("url").value
        elif p.s.take_word("timeout"):
            tok = p.expect_int("timeout in milliseconds")
            if tok.value <= 0:
                p.err(tok.span, "E_SYNTAX", "timeout must be positive")
            timeout = tok.value
        elif p.s.take_word("header"):
            k = p.expect_string("header name").value
            v = p.expect_string("header value").value
            headers.append((k, v))
        elif p.s.take_word("param"):
            _param_line(p, binding, True, Direction.IN, places)
        elif p.s.take_word("result"):
            _param_line(p, binding, True, Direction.OUT, places)
        else:
            p.fail(t.span, "E_SYNTAX", f"unexpected {t.text!r} in REST binding")
    if method is None or url is None:
        p.err(span, "E_SYNTAX", "REST binding needs 'method' and 'url'")
        method = method or HttpMethod.POST
        url = url or ""
    impl = RestImplementation(method, url, places, span=span)
    if timeout is not None:
        impl.timeout_ms = timeout
    impl.headers = headers
    return impl


def _process_impl(p: _Parser, binding: ServiceBinding, span: SourceSpan) -> ProcessImplementation:
    command: str | None = None
    workdir: str | None = None
    while not p.s.at_eof() and not p.s.at_op("}"):
        t = p.s.peek()
        if p.s.take_word("command"):
            command = p.expect_string("command line").value
        elif p.s.take_word("workdir"):
            workdir = p.expect_string("working directory").value
        elif p.s.take_word("param"):
            _param_line(p, binding, False, Direction.IN)
        elif p.s.take_word("result"):
            _param_line(p, binding, False, Direction.OUT)
        else:
            p.fail(t.span, "E_SYNTAX", f"unexpected {t.text!r} in PROCESS binding")
    if command is None:
        p.err(span, "E_SYNTAX", "PROCESS binding needs 'command'")
        command = ""
    return ProcessImplementation(command, workdir, span=span)


def _mock_impl(p: _Parser, binding: ServiceBinding, span: SourceSpan) -> MockImplementation:
    fixture: str | None = None
    while not p.s.at_eof() and not p.s.at_op("}"):
        t = p.s.peek()
        if p.s.take_word("fixture"):
            fixture = p.expect_string("fixture path").value
        elif p.s.take_word("param"):
            _param_line(p, binding, False, Direction.IN)
        elif p.s.take_word("result"):
            _param_line(p, binding, False, Direction.OUT)
        else:
            p.fail(t.span, "E_SYNTAX", f"unexpected {t.text!r} in MOCK binding")
    if fixture is None:
        p.err(span, "E_SYNTAX", "MOCK binding needs 'fixture'")
        fixture = ""
    return MockImplementation(fixture, span=span)


def _generic_impl(p: _Parser, binding: ServiceBinding, kind: str,
                  span: SourceSpan) -> GenericImplementation:
    impl = GenericImplementation(kind, span=span)
    while not p.s.at_eof() and not p.s.at_op("}"):
        t = p.s.peek()
        if p.s.take_word("param"):
            _param_line(p, binding, False, Direction.IN)
        elif p.s.take_word("result"):
            _param_line(p, binding, False, Direction.OUT)
        elif t.kind == "ident":
            p.s.next()
            impl.config[t.text] = p.expect_string("configuration value").value
        else:
            p.fail(t.span, "E_SYNTAX", f"unexpected {t.text!r} in {kind} binding")
    return impl


# ---------------------------------------------------------------------------
# .flow

def parse_flow(text: str, file: str = "<flow>") -> ParseResult:
    p = _Parser(text, file)
    model: Optional[FlowModel] = None
    try:
        model = _flow(p)
    except _Abort:
        pass
    if has_errors(p.diags):
        model = None
    return ParseResult(model, p.diags)


def _flow(p: _Parser) -> FlowModel:
    kw = p.expect_word("flow")
    name = p.expect_ident("flow name")
    p.expect_word("uses")
    uses = [p.expect_ident("domain name").text]
    while p.s.take_op(","):
        uses.append(p.expect_ident("domain name").text)
    model = FlowModel(name.text, uses, span=kw.span)
    p.expect_op("{")
    _flow_items(p, model.steps, model.transitions)
    p.finish_block()
    p.no_trailing()
    p.check_unique("step", model.steps)
    declared = {s.name for s in model.steps}
    for t in model.transitions:
        for end in (t.source, t.target):
            if end not in declared:
                p.err(t.span, "E_UNKNOWN_STEP",
                      f"transition references undeclared step '{end}'")
    return model


def _flow_items(p: _Parser, steps: list[Step], transitions: list[Transition]) -> None:
    while not p.s.at_eof() and not p.s.at_op("}"):
        try:
            _flow_item(p, steps, transitions)
        except _Abort:
            p.sync(_FLOW_ITEM_WORDS)


def _flow_item(p: _Parser, steps: list[Step], transitions: list[Transition]) -> None:
    t = p.s.peek()
    # `X -> Y` is always a transition, even when X collides with an item
    # keyword (the anonymous start step is literally named "start")
    if t.kind == "ident" and p.s.peek(1).kind == "op" and p.s.peek(1).text == "->":
        _transition(p, transitions)
        return
    if p.s.at_word("start"):
        kw = p.s.next()
        nxt = p.s.peek()
        name = "start"
        if nxt.kind == "ident" and nxt.text not in _FLOW_ITEM_WORDS and not (
                p.s.peek(1).kind == "op" and p.s.peek(1).text == "->"):
            name = p.s.next().text
        steps.append(StartStep(name, kw.span))
    elif p.s.at_word("step"):
        kw = p.s.next()
        name = p.expect_ident("step name")
        p.expect_op("=")
        p.expect_word("activity")
        activity = p.expect_ident("activity name")
        step = ActivityStep(name.text, activity.text, span=kw.span)
        while p.s.at_word("overwrite"):
            p.s.next()
            var = p.expect_ident("variable name")
            p.expect_op("=")
            step.overwrites.append(Overwrite(var.text, p.literal(), var.span))
        steps.append(step)
    elif p.s.at_word("retrieve"):
        steps.append(_retrieve(p))
    elif p.s.at_word("store"):
        kw = p.s.next()
        name = p.expect_ident("step name")
        p.expect_op("{")
        p.expect_word("vars")
        variables = [p.expect_ident("variable name").text]
        while p.s.take_op(","):
            variables.append(p.expect_ident("variable name").text)
        p.finish_block()
        steps.append(StoreStep(name.text, variables, kw.span))
    elif p.s.at_word("delete"):
        kw = p.s.next()
        name = p.expect_ident("step name")
        p.expect_op("{")
        p.expect_word("type")
        type_name = p.expect_ident("type name")
        criteria = []
        while p.s.at_word("where"):
            criteria.append(_criterion(p))
        p.finish_block()
        steps.append(DeleteStep(name.text, type_name.text, criteria, kw.span))
    elif p.s.at_word("script"):
        kw = p.s.next()
        name = p.expect_ident("step name")
        p.expect_op("{")
        try:
            script = ex.parse_script_statements(p.s)
        except ex.ExprSyntaxError as e:
            p.fail(e.span, "E_SYNTAX", e.message)
        p.finish_block()
        steps.append(ScriptStep(name.text, script, kw.span))
    elif p.s.at_word("startloop"):
        kw = p.s.next()
        name = p.expect_ident("step name")
        p.expect_word("over")
        data_set = p.path()
        p.expect_word("as")
        loop_name = p.expect_ident("loop variable name")
        steps.append(StartLoopStep(name.text, data_set, loop_name.text, kw.span))
    elif p.s.at_word("endloop"):
        kw = p.s.next()
        name = p.expect_ident("step name")
        p.expect_word("matches")
        matches = p.expect_ident("startloop step name")
        steps.append(EndLoopStep(name.text, matches.text, kw.span))
    elif p.s.at_word("loop"):
        _loop_sugar(p, steps, transitions)
    else:
        p.fail(t.span, "E_SYNTAX",
               f"expected a step declaration or transition, found {t.text or 'end of input'!r}")


def _retrieve(p: _Parser) -> RetrieveStep:
    kw = p.expect_word("retrieve")
    name = p.expect_ident("step name")
    step = RetrieveStep(name.text, span=kw.span)
    p.expect_op("{")
    have_target = have_type = False
    while not p.s.at_eof() and not p.s.at_op("}"):
        t = p.s.peek()
        if p.s.take_word("target"):
            step.target_variable = p.expect_ident("variable name").text
            have_target = True
        elif p.s.take_word("type"):
            step.type_name = p.expect_ident("type name").text
            have_type = True
        elif p.s.take_word("set"):
            flag = p.expect_ident("true/false")
            if flag.text not in ("true", "false"):
                p.fail(flag.span, "E_SYNTAX", f"expected true/false, found {flag.text!r}")
            step.is_set = flag.text == "true"
        elif p.s.at_word("where"):
            step.criteria.append(_criterion(p))
        else:
            p.fail(t.span, "E_SYNTAX", f"unexpected {t.text!r} in retrieve")
    p.finish_block()
    if not have_target or not have_type:
        p.err(kw.span, "E_SYNTAX", "retrieve needs 'target' and 'type'")
    return step


def _criterion(p: _Parser) -> FlowCriterion:
    kw = p.expect_word("where")
    field_path = p.path()
    t = p.s.peek()
    if t.kind == "op" and t.text in _CRITERION_OPS:
        op = _CRITERION_OPS[p.s.next().text]
    elif p.s.take_word("contains"):
        op = CriterionOp.CONTAINS
    else:
        p.fail(t.span, "E_SYNTAX",
               f"expected a criterion operator (== != < <= > >= contains), found {t.text!r}")
    v = p.s.peek()
    if v.kind == "ident" and v.text not in ("true", "false", "date", "location"):
        return FlowCriterion(field_path, op, value_path=p.path(), span=kw.span)
    return FlowCriterion(field_path, op, literal=p.literal(), span=kw.span)


def _transition(p: _Parser, transitions: list[Transition]) -> None:
    src = p.expect_ident("step name")
    p.expect_op("->")
    dst = p.expect_ident("step name")
    condition = None
    if p.s.take_word("when"):
        condition = p.expression()
    transitions.append(Transition(src.text, dst.text, condition, src.span))


def _loop_sugar(p: _Parser, steps: list[Step], transitions: list[Transition]) -> None:
    """Desugar `loop N over s as x { ... }` into startloop/endloop steps."""
    kw = p.expect_word("loop")
    name = p.expect_ident("loop name")
    p.expect_word("over")
    data_set = p.path()
    p.expect_word("as")
    loop_name = p.expect_ident("loop variable name")
    p.expect_op("{")
    body_steps: list[Step] = []
    body_transitions: list[Transition] = []
    _flow_items(p, body_steps, body_transitions)
    p.finish_block()

    start = StartLoopStep(name.text, data_set, loop_name.text, kw.span)
    end = EndLoopStep(f"{name.text}_end", name.text, kw.span)
    steps.append(start)
    steps.extend(body_steps)
    steps.append(end)

    if not body_steps:
        transitions.append(Transition(start.name, end.name, span=kw.span))
        transitions.extend(body_transitions)
        return
    with_incoming = {t.target for t in body_transitions}
    entries = [s for s in body_steps if s.name not in with_incoming]
    if len(entries) != 1:
        p.err(kw.span, "E_LOOP_SHAPE",
              f"loop body must have exactly one entry step, found {len(entries)}")
        entries = entries[:1] or [body_steps[0]]
    transitions.append(Transition(start.name, entries[0].name, span=kw.span))
    transitions.extend(body_transitions)
    with_outgoing = {t.source for t in body_transitions}
    for s in body_steps:
        if s.name not in with_outgoing:
            transitions.append(Transition(s.name, end.name, span=s.span or kw.span))
