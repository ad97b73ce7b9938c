"""The expression and script language used inside .flow files.

Expressions appear in transition conditions; scripts are the bodies of
script steps. Precedence, loosest first: or, and, not, comparisons
(including `in`), additive, multiplicative, unary minus. Reading an
absent path at runtime is an error, never a null.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .dataflow import DataFlow, append_to_collection
from .errors import DataflowError, EvalError, ScriptError
from .lexer import Token, TokenStream, tokenize
from .source import SourceSpan
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
    date_value,
    kind_name,
)

Path = tuple[str, ...]


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Literal:
    value: Value


@dataclass(frozen=True)
class PathRef:
    path: Path


@dataclass(frozen=True)
class EmptySet:
    """The `[]` literal: a collection with an as-yet-unknown element kind."""


@dataclass(frozen=True)
class Unary:
    op: str  # "not" | "neg"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # or and == != < <= > >= in + - * /
    left: "Expr"
    right: "Expr"


Expr = Union[Literal, PathRef, EmptySet, Unary, Binary]


@dataclass
class LetStmt:
    name: str
    expr: Expr
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class AssignStmt:
    path: Path
    expr: Expr
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class AppendStmt:
    path: Path
    expr: Expr
    span: Optional[SourceSpan] = field(default=None, compare=False)


@dataclass
class RenameStmt:
    old: str
    new: str
    span: Optional[SourceSpan] = field(default=None, compare=False)


Statement = Union[LetStmt, AssignStmt, AppendStmt, RenameStmt]


@dataclass
class Script:
    statements: list[Statement] = field(default_factory=list)


# ---------------------------------------------------------------------------
# parsing

class ExprSyntaxError(Exception):
    def __init__(self, span: SourceSpan, message: str):
        super().__init__(message)
        self.span = span
        self.message = message


EXPR_KEYWORDS = frozenset({"not", "and", "or", "in", "true", "false", "date", "location"})

_CMP_OPS = ("==", "!=", "<=", ">=", "<", ">")


def parse_expr(text: str, file: str = "<expr>") -> Expr:
    """Parse a standalone expression (must consume all input)."""
    tokens, diags = tokenize(text, file)
    if diags:
        raise ExprSyntaxError(diags[0].span, diags[0].message)
    stream = TokenStream(tokens)
    expr = parse_expression(stream)
    if not stream.at_eof():
        t = stream.peek()
        raise ExprSyntaxError(t.span, f"unexpected {t.text!r} after expression")
    return expr


def parse_expression(stream: TokenStream) -> Expr:
    return _parse_or(stream)


def _parse_or(s: TokenStream) -> Expr:
    left = _parse_and(s)
    while s.at_word("or"):
        s.next()
        left = Binary("or", left, _parse_and(s))
    return left


def _parse_and(s: TokenStream) -> Expr:
    left = _parse_not(s)
    while s.at_word("and"):
        s.next()
        left = Binary("and", left, _parse_not(s))
    return left


def _parse_not(s: TokenStream) -> Expr:
    if s.at_word("not"):
        s.next()
        return Unary("not", _parse_not(s))
    return _parse_cmp(s)


def _parse_cmp(s: TokenStream) -> Expr:
    left = _parse_add(s)
    if s.at_op(*_CMP_OPS):
        op = s.next().text
        return Binary(op, left, _parse_add(s))
    if s.at_word("in"):
        s.next()
        return Binary("in", left, _parse_add(s))
    return left


def _parse_add(s: TokenStream) -> Expr:
    left = _parse_mul(s)
    while s.at_op("+", "-"):
        op = s.next().text
        left = Binary(op, left, _parse_mul(s))
    return left


def _parse_mul(s: TokenStream) -> Expr:
    left = _parse_unary(s)
    while s.at_op("*", "/"):
        op = s.next().text
        left = Binary(op, left, _parse_unary(s))
    return left


def _parse_unary(s: TokenStream) -> Expr:
    if s.at_op("-"):
        minus = s.next()
        t = s.peek()
        if t.kind == "int":
            s.next()
            try:
                return Literal(IntVal(-t.value))
            except ValueError as exc:
                raise ExprSyntaxError(t.span, str(exc)) from exc
        if t.kind == "float":
            s.next()
            return Literal(FloatVal(-t.value))
        return Unary("neg", _parse_unary(s))
    return _parse_primary(s)


def _parse_primary(s: TokenStream) -> Expr:
    t = s.peek()
    if t.kind == "op" and t.text == "(":
        s.next()
        inner = parse_expression(s)
        if not s.take_op(")"):
            raise ExprSyntaxError(s.peek().span, "expected ')'")
        return inner
    if t.kind == "op" and t.text == "[":
        s.next()
        if not s.take_op("]"):
            raise ExprSyntaxError(s.peek().span, "expected ']' (only the empty set literal is supported)")
        return EmptySet()
    if t.kind in ("int", "float", "string") or (
        t.kind == "ident" and t.text in ("true", "false", "date", "location")
    ):
        return Literal(parse_literal(s))
    if t.kind == "ident":
        if t.text in EXPR_KEYWORDS:
            raise ExprSyntaxError(t.span, f"{t.text!r} cannot start an expression")
        return PathRef(parse_path(s))
    raise ExprSyntaxError(t.span, f"expected expression, found {t.text or 'end of input'!r}")


def parse_path(s: TokenStream) -> Path:
    t = s.peek()
    if t.kind != "ident":
        raise ExprSyntaxError(t.span, f"expected name, found {t.text or 'end of input'!r}")
    parts = [s.next().text]
    while s.at_op("."):
        s.next()
        nxt = s.peek()
        if nxt.kind != "ident":
            raise ExprSyntaxError(nxt.span, "expected attribute name after '.'")
        parts.append(s.next().text)
    return tuple(parts)


def parse_literal(s: TokenStream) -> Value:
    """Parse a literal: number, string, boolean, `date "..."`, `location(lat, lon)`."""
    t = s.peek()
    if t.kind == "op" and t.text == "-":
        s.next()
        n = s.peek()
        if n.kind == "int":
            s.next()
            return IntVal(-n.value)
        if n.kind == "float":
            s.next()
            return FloatVal(-n.value)
        raise ExprSyntaxError(n.span, "expected number after '-'")
    if t.kind == "int":
        s.next()
        try:
            return IntVal(t.value)
        except ValueError as exc:
            raise ExprSyntaxError(t.span, str(exc)) from exc
    if t.kind == "float":
        s.next()
        return FloatVal(t.value)
    if t.kind == "string":
        s.next()
        return StringVal(t.value)
    if t.kind == "ident" and t.text in ("true", "false"):
        s.next()
        return BoolVal(t.text == "true")
    if t.kind == "ident" and t.text == "date":
        s.next()
        lit = s.peek()
        if lit.kind != "string":
            raise ExprSyntaxError(lit.span, 'expected string after date, e.g. date "2024-01-31T00:00:00Z"')
        s.next()
        try:
            return date_value(lit.value)
        except ValueError as exc:
            raise ExprSyntaxError(lit.span, f"bad date literal: {exc}") from exc
    if t.kind == "ident" and t.text == "location":
        s.next()
        if not s.take_op("("):
            raise ExprSyntaxError(s.peek().span, "expected '(' after location")
        lat = _parse_signed_number(s)
        if not s.take_op(","):
            raise ExprSyntaxError(s.peek().span, "expected ',' in location literal")
        lon = _parse_signed_number(s)
        if not s.take_op(")"):
            raise ExprSyntaxError(s.peek().span, "expected ')' in location literal")
        try:
            return LocationVal(lat, lon)
        except ValueError as exc:
            raise ExprSyntaxError(t.span, str(exc)) from exc
    raise ExprSyntaxError(t.span, f"expected literal, found {t.text or 'end of input'!r}")


def _parse_signed_number(s: TokenStream) -> float:
    sign = -1.0 if s.take_op("-") else 1.0
    t = s.peek()
    if t.kind not in ("int", "float"):
        raise ExprSyntaxError(t.span, "expected number")
    s.next()
    return sign * float(t.value)


SCRIPT_KEYWORDS = frozenset({"let", "append", "rename"})


def parse_script_statements(s: TokenStream) -> Script:
    """Parse script statements until '}' (left unconsumed) or end of input."""
    stmts: list[Statement] = []
    while not s.at_eof() and not s.at_op("}"):
        t = s.peek()
        if s.at_word("let"):
            kw = s.next()
            name_tok = s.peek()
            if name_tok.kind != "ident":
                raise ExprSyntaxError(name_tok.span, "expected variable name after let")
            s.next()
            if not s.take_op("="):
                raise ExprSyntaxError(s.peek().span, "expected '=' in let")
            stmts.append(LetStmt(name_tok.text, parse_expression(s), kw.span))
        elif s.at_word("append"):
            kw = s.next()
            path = parse_path(s)
            if not s.take_op("<-"):
                raise ExprSyntaxError(s.peek().span, "expected '<-' in append")
            stmts.append(AppendStmt(path, parse_expression(s), kw.span))
        elif s.at_word("rename"):
            kw = s.next()
            old = s.peek()
            if old.kind != "ident":
                raise ExprSyntaxError(old.span, "expected variable name after rename")
            s.next()
            if not s.take_op("->"):
                raise ExprSyntaxError(s.peek().span, "expected '->' in rename")
            new = s.peek()
            if new.kind != "ident":
                raise ExprSyntaxError(new.span, "expected new variable name in rename")
            s.next()
            stmts.append(RenameStmt(old.text, new.text, kw.span))
        elif t.kind == "ident":
            path = parse_path(s)
            if not s.take_op("="):
                raise ExprSyntaxError(s.peek().span, "expected '=' in assignment")
            stmts.append(AssignStmt(path, parse_expression(s), t.span))
        else:
            raise ExprSyntaxError(t.span, f"expected script statement, found {t.text!r}")
    return Script(stmts)


def parse_script(text: str, file: str = "<script>") -> Script:
    tokens, diags = tokenize(text, file)
    if diags:
        raise ExprSyntaxError(diags[0].span, diags[0].message)
    stream = TokenStream(tokens)
    script = parse_script_statements(stream)
    if not stream.at_eof():
        t = stream.peek()
        raise ExprSyntaxError(t.span, f"unexpected {t.text!r}")
    return script


# ---------------------------------------------------------------------------
# evaluation

Reader = Callable[[Path], Value]


def eval_expr(expr: Expr, read: Reader) -> Value:
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, EmptySet):
        return CollectionVal(())
    if isinstance(expr, PathRef):
        return read(expr.path)
    if isinstance(expr, Unary):
        if expr.op == "not":
            v = eval_expr(expr.operand, read)
            if not isinstance(v, BoolVal):
                raise EvalError(f"not: expected BOOLEAN, got {kind_name(v)}",
                                code="E_TYPE_MISMATCH")
            return BoolVal(not v.value)
        v = eval_expr(expr.operand, read)
        if isinstance(v, IntVal):
            return IntVal(-v.value)
        if isinstance(v, FloatVal):
            return FloatVal(-v.value)
        raise EvalError(f"negation needs a number, got {kind_name(v)}",
                        code="E_TYPE_MISMATCH")
    if isinstance(expr, Binary):
        return _eval_binary(expr, read)
    raise TypeError(f"not an expression: {expr!r}")


def _eval_binary(expr: Binary, read: Reader) -> Value:
    op = expr.op
    if op in ("and", "or"):
        left = eval_expr(expr.left, read)
        if not isinstance(left, BoolVal):
            raise EvalError(f"{op}: expected BOOLEAN, got {kind_name(left)}",
                            code="E_TYPE_MISMATCH")
        if op == "and" and not left.value:
            return BoolVal(False)
        if op == "or" and left.value:
            return BoolVal(True)
        right = eval_expr(expr.right, read)
        if not isinstance(right, BoolVal):
            raise EvalError(f"{op}: expected BOOLEAN, got {kind_name(right)}",
                            code="E_TYPE_MISMATCH")
        return right

    left = eval_expr(expr.left, read)
    right = eval_expr(expr.right, read)

    if op == "==":
        return BoolVal(values_equal(left, right))
    if op == "!=":
        return BoolVal(not values_equal(left, right))
    if op in ("<", "<=", ">", ">="):
        c = _compare(left, right)
        return BoolVal({"<": c < 0, "<=": c <= 0, ">": c > 0, ">=": c >= 0}[op])
    if op == "in":
        return BoolVal(_membership(left, right))
    if op == "+":
        if isinstance(left, StringVal) and isinstance(right, StringVal):
            return StringVal(left.value + right.value)
        return _arith(op, left, right)
    if op in ("-", "*", "/"):
        return _arith(op, left, right)
    raise TypeError(f"unknown operator {op!r}")


def values_equal(a: Value, b: Value) -> bool:
    if isinstance(a, (IntVal, FloatVal)) and isinstance(b, (IntVal, FloatVal)):
        return a.value == b.value
    if type(a) is not type(b):
        raise EvalError(f"cannot compare {kind_name(a)} with {kind_name(b)}",
                        code="E_TYPE_MISMATCH")
    return a == b


def _compare(a: Value, b: Value) -> int:
    if isinstance(a, (IntVal, FloatVal)) and isinstance(b, (IntVal, FloatVal)):
        av, bv = a.value, b.value
    elif isinstance(a, StringVal) and isinstance(b, StringVal):
        av, bv = a.value, b.value
    elif isinstance(a, DateVal) and isinstance(b, DateVal):
        av, bv = a.epoch_ms, b.epoch_ms
    else:
        raise EvalError(f"cannot order {kind_name(a)} against {kind_name(b)}",
                        code="E_TYPE_MISMATCH")
    return -1 if av < bv else (1 if av > bv else 0)


def _membership(item: Value, container: Value) -> bool:
    if isinstance(container, CollectionVal):
        return any(values_equal(item, el) for el in container.items)
    if isinstance(container, StringVal) and isinstance(item, StringVal):
        return item.value in container.value
    raise EvalError(f"'in' needs a set or string on the right, got {kind_name(container)}",
                    code="E_TYPE_MISMATCH")


def _arith(op: str, a: Value, b: Value) -> Value:
    if not isinstance(a, (IntVal, FloatVal)) or not isinstance(b, (IntVal, FloatVal)):
        raise EvalError(f"'{op}' needs numbers, got {kind_name(a)} and {kind_name(b)}",
                        code="E_TYPE_MISMATCH")
    both_int = isinstance(a, IntVal) and isinstance(b, IntVal)
    if op == "/":
        if b.value == 0:
            raise EvalError("division by zero", code="E_DIV_ZERO")
        if both_int:
            q = abs(a.value) // abs(b.value)  # truncate toward zero
            return IntVal(q if (a.value >= 0) == (b.value >= 0) else -q)
        return FloatVal(a.value / b.value)
    res = {"+": a.value + b.value, "-": a.value - b.value, "*": a.value * b.value}[op]
    if both_int:
        try:
            return IntVal(res)
        except ValueError as exc:
            raise EvalError(str(exc), code="E_OVERFLOW") from exc
    return FloatVal(float(res))


# ---------------------------------------------------------------------------
# script execution

@dataclass(frozen=True)
class ScriptEffect:
    op: str  # "create" | "update" | "append" | "remove"
    path: str


def exec_script(script: Script, df: DataFlow) -> list[ScriptEffect]:
    """Run a script against the data-flow and return every touched path."""
    effects: list[ScriptEffect] = []
    read = df.read
    for stmt in script.statements:
        if isinstance(stmt, LetStmt):
            value = eval_expr(stmt.expr, read)
            if not df.bind_is_new(stmt.name):
                raise ScriptError(f"let: '{stmt.name}' is already declared here",
                                  code="E_DUPLICATE_LET")
            df.bind(stmt.name, value)
            effects.append(ScriptEffect("create", stmt.name))
        elif isinstance(stmt, AssignStmt):
            if not df.has(stmt.path[0]):
                raise ScriptError(
                    f"assignment to undeclared variable '{stmt.path[0]}' (use let)",
                    code="E_ASSIGN_UNDECLARED",
                )
            value = eval_expr(stmt.expr, read)
            df.write(stmt.path, value)
            effects.append(ScriptEffect("update", ".".join(stmt.path)))
        elif isinstance(stmt, AppendStmt):
            value = eval_expr(stmt.expr, read)
            append_to_collection(df, stmt.path, value)
            effects.append(ScriptEffect("append", ".".join(stmt.path)))
        elif isinstance(stmt, RenameStmt):
            if not df.has(stmt.old):
                raise ScriptError(f"rename of undeclared variable '{stmt.old}'",
                                  code="E_ASSIGN_UNDECLARED")
            df.rename(stmt.old, stmt.new)
            effects.append(ScriptEffect("remove", stmt.old))
            effects.append(ScriptEffect("create", stmt.new))
        else:
            raise TypeError(f"not a statement: {stmt!r}")
    return effects


# ---------------------------------------------------------------------------
# static typing (used by the validator)

@dataclass(frozen=True)
class StaticType:
    """Type of an expression or variable: a basic kind or record, maybe a set.

    ``basic is None and type_name is None`` with ``is_set`` marks the empty
    set literal whose element kind is unconstrained.
    """

    basic: Optional[BasicType] = None
    type_name: Optional[str] = None
    is_set: bool = False

    def describe(self) -> str:
        if self.basic is None and self.type_name is None:
            inner = "?" if self.is_set else "?"
        else:
            inner = self.basic.value if self.basic else self.type_name
        return f"set {inner}" if self.is_set else inner

    @property
    def element(self) -> "StaticType":
        return StaticType(self.basic, self.type_name, False)


def static_of_value(v: Value) -> StaticType:
    if isinstance(v, RecordVal):
        return StaticType(None, v.type_name, False)
    if isinstance(v, CollectionVal):
        if not v.items:
            return StaticType(None, None, True)
        el = static_of_value(v.items[0])
        return StaticType(el.basic, el.type_name, True)
    return StaticType(basic_type_of(v), None, False)


BOOL_T = StaticType(BasicType.BOOLEAN)
_NUMERIC = (BasicType.INTEGER, BasicType.FLOAT)
_ORDERED = (BasicType.INTEGER, BasicType.FLOAT, BasicType.STRING, BasicType.DATE)


class ExprTypeError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def types_compatible(a: StaticType, b: StaticType) -> bool:
    """Exact match, except INTEGER and FLOAT mix; unknown set elements match any set."""
    if a.is_set != b.is_set:
        return False
    if a.is_set:
        ea, eb = a.element, b.element
        if (ea.basic is None and ea.type_name is None) or (eb.basic is None and eb.type_name is None):
            return True
        return types_compatible(ea, eb)
    if a.type_name is not None or b.type_name is not None:
        return a.type_name == b.type_name
    if a.basic in _NUMERIC and b.basic in _NUMERIC:
        return True
    return a.basic is b.basic


AttrResolver = Callable[[str, str], Optional[StaticType]]
TypeEnv = dict[str, StaticType]


def infer_path_type(path: Path, env: TypeEnv, resolve_attr: AttrResolver) -> StaticType:
    if path[0] not in env:
        raise ExprTypeError("E_UNREACHABLE_VARIABLE",
                            f"variable '{path[0]}' is never produced")
    current = env[path[0]]
    for i, attr in enumerate(path[1:], start=1):
        if current.is_set:
            raise ExprTypeError(
                "E_BAD_PATH",
                f"'{'.'.join(path[:i])}' is a set; cannot take attribute '{attr}'",
            )
        if current.type_name is None:
            raise ExprTypeError(
                "E_BAD_PATH",
                f"'{'.'.join(path[:i])}' is {current.describe()}; it has no attributes",
            )
        nxt = resolve_attr(current.type_name, attr)
        if nxt is None:
            raise ExprTypeError(
                "E_BAD_PATH",
                f"type '{current.type_name}' has no attribute '{attr}'",
            )
        current = nxt
    return current


def infer_expr_type(expr: Expr, env: TypeEnv, resolve_attr: AttrResolver) -> StaticType:
    if isinstance(expr, Literal):
        return static_of_value(expr.value)
    if isinstance(expr, EmptySet):
        return StaticType(None, None, True)
    if isinstance(expr, PathRef):
        return infer_path_type(expr.path, env, resolve_attr)
    if isinstance(expr, Unary):
        t = infer_expr_type(expr.operand, env, resolve_attr)
        if expr.op == "not":
            if t != BOOL_T:
                raise ExprTypeError("E_TYPE_MISMATCH", f"not: expected BOOLEAN, got {t.describe()}")
            return BOOL_T
        if t.is_set or t.basic not in _NUMERIC:
            raise ExprTypeError("E_TYPE_MISMATCH", f"negation needs a number, got {t.describe()}")
        return t
    if isinstance(expr, Binary):
        op = expr.op
        lt = infer_expr_type(expr.left, env, resolve_attr)
        rt = infer_expr_type(expr.right, env, resolve_attr)
        if op in ("and", "or"):
            if lt != BOOL_T or rt != BOOL_T:
                raise ExprTypeError("E_TYPE_MISMATCH",
                                    f"{op}: expected BOOLEAN operands, got {lt.describe()} and {rt.describe()}")
            return BOOL_T
        if op in ("==", "!="):
            if not types_compatible(lt, rt):
                raise ExprTypeError("E_TYPE_MISMATCH",
                                    f"cannot compare {lt.describe()} with {rt.describe()}")
            return BOOL_T
        if op in ("<", "<=", ">", ">="):
            if lt.is_set or rt.is_set or lt.basic not in _ORDERED or not types_compatible(lt, rt):
                raise ExprTypeError("E_TYPE_MISMATCH",
                                    f"cannot order {lt.describe()} against {rt.describe()}")
            return BOOL_T
        if op == "in":
            if rt.is_set:
                if not types_compatible(StaticType(lt.basic, lt.type_name, True), rt):
                    raise ExprTypeError("E_TYPE_MISMATCH",
                                        f"{lt.describe()} cannot be a member of {rt.describe()}")
                return BOOL_T
            if lt.basic is BasicType.STRING and rt.basic is BasicType.STRING:
                return BOOL_T
            raise ExprTypeError("E_TYPE_MISMATCH",
                                f"'in' needs a set or STRING on the right, got {rt.describe()}")
        # arithmetic
        if op == "+" and lt.basic is BasicType.STRING and rt.basic is BasicType.STRING \
                and not lt.is_set and not rt.is_set:
            return StaticType(BasicType.STRING)
        if lt.is_set or rt.is_set or lt.basic not in _NUMERIC or rt.basic not in _NUMERIC:
            raise ExprTypeError("E_TYPE_MISMATCH",
                                f"'{op}' needs numbers, got {lt.describe()} and {rt.describe()}")
        if lt.basic is BasicType.INTEGER and rt.basic is BasicType.INTEGER:
            return StaticType(BasicType.INTEGER)
        return StaticType(BasicType.FLOAT)
    raise TypeError(f"not an expression: {expr!r}")


def collect_paths(expr: Expr) -> list[Path]:
    """Every data-flow path read by an expression, left to right."""
    out: list[Path] = []

    def walk(e: Expr):
        if isinstance(e, PathRef):
            out.append(e.path)
        elif isinstance(e, Unary):
            walk(e.operand)
        elif isinstance(e, Binary):
            walk(e.left)
            walk(e.right)

    walk(expr)
    return out
