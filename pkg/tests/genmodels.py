"""Random model generators for the parse/print round-trip properties.

Generated models are structurally parseable (unique names where the
parser insists, transitions among declared steps) but deliberately not
semantically valid: the round-trip property is about syntax fidelity.
"""

from __future__ import annotations

import random
import string

from flowforge.expr import (
    AppendStmt,
    AssignStmt,
    Binary,
    EmptySet,
    LetStmt,
    Literal,
    PathRef,
    RenameStmt,
    Script,
    Unary,
)
from flowforge.model import (
    AbrModel,
    ActivityDef,
    ActivityStep,
    AttrDef,
    CriterionOp,
    DeleteStep,
    Direction,
    DomainModel,
    EndLoopStep,
    FlowCriterion,
    FlowModel,
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
    ScriptStep,
    ServiceBinding,
    ServiceDef,
    ServiceParameter,
    ServiceRelation,
    StartLoopStep,
    StartStep,
    StoreStep,
    Transition,
    TypeDef,
    TypeRef,
    ValueMapping,
)
from flowforge.values import (
    BasicType,
    BoolVal,
    DateVal,
    FloatVal,
    IntVal,
    LocationVal,
    StringVal,
)

RESERVED = {
    "domain", "type", "service", "io", "activity", "in", "out", "set", "call",
    "show", "ask", "bindings", "for", "implement", "as", "method", "url",
    "timeout", "header", "param", "result", "command", "workdir", "fixture",
    "path", "query", "body", "flow", "uses", "start", "step", "retrieve",
    "target", "where", "store", "vars", "delete", "script", "startloop",
    "endloop", "loop", "over", "matches", "when", "let", "append", "rename",
    "true", "false", "date", "location", "not", "and", "or", "in", "contains",
} | {b.value for b in BasicType}


class Names:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def fresh(self, prefix: str = "g") -> str:
        while True:
            name = prefix + "".join(self.rng.choices(string.ascii_lowercase, k=4)) \
                + str(self.rng.randrange(100))
            if name not in self.used and name not in RESERVED:
                self.used.add(name)
                return name


_TRICKY_STRINGS = [
    "", "plain", 'quo"te', "back\\slash", "new\nline", "tab\there",
    "unié中", "  spaced  ", "zero\0byte", "slash//comment",
]


def gen_string(rng: random.Random) -> str:
    if rng.random() < 0.5:
        return rng.choice(_TRICKY_STRINGS)
    return "".join(rng.choices(string.printable[:94] + "é中", k=rng.randrange(0, 12)))


def gen_literal(rng: random.Random):
    pick = rng.randrange(6)
    if pick == 0:
        return StringVal(gen_string(rng))
    if pick == 1:
        return IntVal(rng.choice([0, 1, -1, 42, -(2**63), 2**63 - 1,
                                  rng.randrange(-10**6, 10**6)]))
    if pick == 2:
        f = rng.choice([0.5, -2.25, 1e30, 1e-7, 3.141592653589793,
                        rng.uniform(-1e6, 1e6)])
        return FloatVal(f)
    if pick == 3:
        return BoolVal(rng.random() < 0.5)
    if pick == 4:
        return DateVal(rng.randrange(0, 4_000_000_000_000))
    return LocationVal(round(rng.uniform(-90, 90), 6), round(rng.uniform(-180, 180), 6))


def gen_path(rng: random.Random, names: Names) -> tuple[str, ...]:
    return tuple(names.fresh("p") for _ in range(rng.randrange(1, 4)))


def gen_expr(rng: random.Random, names: Names, depth: int = 3):
    if depth <= 0 or rng.random() < 0.3:
        pick = rng.randrange(3)
        if pick == 0:
            return Literal(gen_literal(rng))
        if pick == 1:
            return PathRef(gen_path(rng, names))
        return EmptySet()
    pick = rng.randrange(14)
    if pick == 0:
        return Unary("not", gen_expr(rng, names, depth - 1))
    if pick == 1:
        # negation folds onto numeric literals at parse time, so only wrap
        # non-literal operands
        return Unary("neg", PathRef(gen_path(rng, names)))
    op = rng.choice(["or", "and", "==", "!=", "<", "<=", ">", ">=", "in",
                     "+", "-", "*", "/"])
    return Binary(op, gen_expr(rng, names, depth - 1), gen_expr(rng, names, depth - 1))


def gen_script(rng: random.Random, names: Names) -> Script:
    stmts = []
    for _ in range(rng.randrange(0, 5)):
        pick = rng.randrange(4)
        if pick == 0:
            stmts.append(LetStmt(names.fresh("v"), gen_expr(rng, names, 2)))
        elif pick == 1:
            stmts.append(AssignStmt(gen_path(rng, names), gen_expr(rng, names, 2)))
        elif pick == 2:
            stmts.append(AppendStmt(gen_path(rng, names), gen_expr(rng, names, 2)))
        else:
            stmts.append(RenameStmt(names.fresh("r"), names.fresh("r")))
    return Script(stmts)


def gen_type_ref(rng: random.Random, earlier_types: list[str], self_name: str | None = None):
    is_set = rng.random() < 0.3
    candidates = list(earlier_types)
    if is_set and self_name:
        candidates.append(self_name)  # self-reference is legal through sets
    if candidates and rng.random() < 0.3:
        return TypeRef(rng.choice(candidates), is_set)
    return TypeRef(rng.choice(list(BasicType)), is_set)


def gen_domain(rng: random.Random) -> DomainModel:
    names = Names(rng)
    dom = DomainModel(names.fresh("dom"))
    type_names: list[str] = []
    for _ in range(rng.randrange(0, 4)):
        tname = names.fresh("T")
        attrs = Names(rng)
        td = TypeDef(tname, [
            AttrDef(attrs.fresh("a"), gen_type_ref(rng, type_names, tname))
            for _ in range(rng.randrange(0, 5))
        ])
        type_names.append(tname)
        dom.types.append(td)
    for _ in range(rng.randrange(0, 3)):
        pnames = Names(rng)
        dom.services.append(ServiceDef(
            names.fresh("svc"),
            [Param(pnames.fresh("i"), gen_type_ref(rng, type_names))
             for _ in range(rng.randrange(0, 3))],
            [Param(pnames.fresh("o"), gen_type_ref(rng, type_names))
             for _ in range(rng.randrange(0, 3))],
        ))
    for _ in range(rng.randrange(0, 3)):
        vnames = Names(rng)
        dom.ios.append(IoDef(names.fresh("ioq"), [
            IoVariable(vnames.fresh("v"), gen_type_ref(rng, type_names),
                       rng.choice([Direction.IN, Direction.OUT]))
            for _ in range(rng.randrange(0, 4))
        ]))
    for _ in range(rng.randrange(0, 3)):
        relations = []
        for _ in range(rng.randrange(0, 3)):
            if dom.services and rng.random() < 0.6:
                svc = rng.choice(dom.services)
                mappings = []
                for p in svc.inputs:
                    if rng.random() < 0.5:
                        mappings.append(ParameterMapping(p.name, gen_path(rng, names),
                                                         Direction.IN))
                    else:
                        mappings.append(ValueMapping(p.name, gen_literal(rng)))
                for p in svc.outputs:
                    if rng.random() < 0.7:
                        mappings.append(ParameterMapping(p.name, gen_path(rng, names),
                                                         Direction.OUT))
                relations.append(ServiceRelation(svc.name, mappings))
            elif dom.ios:
                io = rng.choice(dom.ios)
                shows = []
                asks = []
                for v in io.variables:
                    if v.direction is Direction.OUT and rng.random() < 0.7:
                        if rng.random() < 0.7:
                            shows.append(ParameterMapping(v.name, gen_path(rng, names),
                                                          Direction.IN))
                        else:
                            shows.append(ValueMapping(v.name, gen_literal(rng)))
                    elif v.direction is Direction.IN and rng.random() < 0.7:
                        asks.append(ParameterMapping(v.name, gen_path(rng, names),
                                                     Direction.OUT))
                relations.append(IoRelation(io.name, shows, asks))
        dom.activities.append(ActivityDef(names.fresh("act"), relations))
    return dom


def gen_abr(rng: random.Random, domain: DomainModel) -> AbrModel:
    names = Names(rng)
    abr = AbrModel(names.fresh("bnd"), domain.name)
    for svc in domain.services:
        if rng.random() < 0.2:
            continue
        kind = rng.randrange(3)
        params = []
        cnames = Names(rng)
        if rng.random() >= 0.2:  # else: identity mapping left implicit
            for p in svc.inputs:
                params.append(ServiceParameter(p.name, cnames.fresh("c"), Direction.IN))
            for p in svc.outputs:
                params.append(ServiceParameter(p.name, cnames.fresh("c"), Direction.OUT))
        if kind == 0:
            places = {p.abstract_name: rng.choice(list(RestPlace))
                      for p in params if p.direction is Direction.IN}
            impl = RestImplementation(
                rng.choice(list(HttpMethod)),
                f"http://example.test/{names.fresh('u')}",
                places,
                timeout_ms=rng.randrange(1, 60_000),
                headers=[(gen_string(rng) or "k", gen_string(rng))
                         for _ in range(rng.randrange(0, 2))],
            )
        elif kind == 1:
            impl = ProcessImplementation(
                "python3 stub.py",
                names.fresh("wd") if rng.random() < 0.5 else None)
        else:
            impl = MockImplementation(f"{names.fresh('fx')}.json")
        abr.bindings.append(ServiceBinding(svc.name, impl, params))
    return abr


def gen_flow(rng: random.Random, domain: DomainModel) -> FlowModel:
    names = Names(rng)
    flow = FlowModel(names.fresh("flw"), [domain.name])
    steps = []
    for _ in range(rng.randrange(1, 7)):
        pick = rng.randrange(7)
        name = names.fresh("s")
        if pick == 0 and domain.activities:
            step = ActivityStep(name, rng.choice(domain.activities).name, [
                Overwrite(names.fresh("ow"), gen_literal(rng))
                for _ in range(rng.randrange(0, 3))
            ])
        elif pick == 1:
            step = RetrieveStep(name, names.fresh("tv"),
                                rng.choice(domain.types).name if domain.types else names.fresh("Ty"),
                                rng.random() < 0.5,
                                [gen_criterion(rng, names)
                                 for _ in range(rng.randrange(0, 3))])
        elif pick == 2:
            step = StoreStep(name, [names.fresh("sv")
                                    for _ in range(rng.randrange(1, 4))])
        elif pick == 3:
            step = DeleteStep(name,
                              rng.choice(domain.types).name if domain.types else names.fresh("Ty"),
                              [gen_criterion(rng, names)
                               for _ in range(rng.randrange(0, 3))])
        elif pick == 4:
            step = ScriptStep(name, gen_script(rng, names))
        elif pick == 5:
            start = StartLoopStep(name, gen_path(rng, names), names.fresh("it"))
            steps.append(start)
            step = EndLoopStep(names.fresh("e"), start.name)
        else:
            step = ActivityStep(name, names.fresh("anyact"))
        steps.append(step)
    if rng.random() < 0.4:
        steps.insert(0, StartStep(names.fresh("st")))
    flow.steps = steps
    step_names = [s.name for s in steps]
    for _ in range(rng.randrange(0, 8)):
        cond = gen_expr(rng, names, 2) if rng.random() < 0.5 else None
        flow.transitions.append(Transition(rng.choice(step_names),
                                           rng.choice(step_names), cond))
    return flow


def gen_criterion(rng: random.Random, names: Names) -> FlowCriterion:
    op = rng.choice(list(CriterionOp))
    if rng.random() < 0.5:
        return FlowCriterion(gen_path(rng, names), op, literal=gen_literal(rng))
    return FlowCriterion(gen_path(rng, names), op, value_path=gen_path(rng, names))
