import random

import pytest

from flowforge.dataflow import DataFlow
from flowforge.errors import EvalError, ScriptError
from flowforge.expr import (
    Binary,
    EmptySet,
    ExprTypeError,
    Literal,
    PathRef,
    StaticType,
    Unary,
    collect_paths,
    eval_expr,
    exec_script,
    infer_expr_type,
    parse_expr,
    parse_script,
)
from flowforge.values import (
    BasicType,
    BoolVal,
    CollectionVal,
    DateVal,
    FloatVal,
    IntVal,
    StringVal,
)


def read_env(env):
    df = DataFlow(env)
    return df.read


def ev(text, env=None):
    return eval_expr(parse_expr(text), read_env(env or {}))


def test_comparison():
    assert ev("3 < 5") == BoolVal(True)
    assert ev("3 >= 5") == BoolVal(False)
    assert ev('"abc" < "abd"') == BoolVal(True)


def test_equality_against_variable():
    assert ev('action == "select"', {"action": StringVal("select")}) == BoolVal(True)
    assert ev('action == "select"', {"action": StringVal("page")}) == BoolVal(False)


def test_division_by_zero():
    with pytest.raises(EvalError) as exc:
        ev("1/0")
    assert exc.value.code == "E_DIV_ZERO"
    with pytest.raises(EvalError):
        ev("1.0 / 0.0")


def test_integer_division_truncates_toward_zero():
    assert ev("7 / 2") == IntVal(3)
    assert ev("-7 / 2") == IntVal(-3)
    assert ev("7 / -2") == IntVal(-3)


def test_string_concatenation():
    assert ev('"foo" + "bar"') == StringVal("foobar")


def test_precedence():
    assert parse_expr("a or b and c") == Binary(
        "or", PathRef(("a",)), Binary("and", PathRef(("b",)), PathRef(("c",))))
    assert parse_expr("not a == b") == Unary(
        "not", Binary("==", PathRef(("a",)), PathRef(("b",))))
    assert parse_expr("1 + 2 * 3") == Binary(
        "+", Literal(IntVal(1)), Binary("*", Literal(IntVal(2)), Literal(IntVal(3))))
    assert ev("1 + 2 * 3") == IntVal(7)
    assert ev("(1 + 2) * 3") == IntVal(9)
    assert ev("not true or true") == BoolVal(True)


def test_unary_minus_folds_literals():
    assert parse_expr("-3") == Literal(IntVal(-3))
    assert parse_expr("-x") == Unary("neg", PathRef(("x",)))
    assert ev("-x", {"x": IntVal(4)}) == IntVal(-4)


def test_membership():
    tags = CollectionVal((StringVal("rust"), StringVal("go")))
    assert ev('"rust" in tags', {"tags": tags}) == BoolVal(True)
    assert ev('"zig" in tags', {"tags": tags}) == BoolVal(False)
    assert ev('"ell" in "hello"') == BoolVal(True)
    assert ev("x in []", {"x": IntVal(1)}) == BoolVal(False)


def test_date_comparison_chronological():
    env = {"a": DateVal(1000), "b": DateVal(2000)}
    assert ev("a < b", env) == BoolVal(True)
    assert ev('a < date "1970-01-01T00:00:03Z"', env) == BoolVal(True)


def test_short_circuit():
    # the right side would fault via null read if evaluated
    assert ev("false and missing == 1") == BoolVal(False)
    assert ev("true or missing == 1") == BoolVal(True)


def test_null_read_is_error():
    with pytest.raises(Exception) as exc:
        ev("missing + 1")
    assert getattr(exc.value, "code", None) == "E_NULL_READ"


def test_mixed_numeric():
    assert ev("1 + 2.5") == FloatVal(3.5)
    assert ev("2 == 2.0") == BoolVal(True)


# scripts ---------------------------------------------------------------


def test_let_then_assign():
    df = DataFlow()
    effects = exec_script(parse_script("let n = 0 n = n + 1"), df)
    assert df.read(("n",)) == IntVal(1)
    assert [(e.op, e.path) for e in effects] == [("create", "n"), ("update", "n")]


def test_append_to_empty_set():
    df = DataFlow()
    exec_script(parse_script('let tags = [] append tags <- "rust"'), df)
    assert df.read(("tags",)) == CollectionVal((StringVal("rust"),))


def test_rename_preserves_value():
    df = DataFlow({"articleList": IntVal(42)})
    before = {name: value for name, value in df.items()}
    effects = exec_script(parse_script("rename articleList -> articles"), df)
    after = {name: value for name, value in df.items()}
    assert after == {"articles": IntVal(42)}
    assert before == {"articleList": IntVal(42)}
    assert {(e.op, e.path) for e in effects} == {("remove", "articleList"),
                                                 ("create", "articles")}


def test_assign_undeclared():
    df = DataFlow()
    with pytest.raises(ScriptError) as exc:
        exec_script(parse_script("n = 1"), df)
    assert exc.value.code == "E_ASSIGN_UNDECLARED"


def test_append_not_set():
    df = DataFlow({"n": IntVal(1)})
    with pytest.raises(Exception) as exc:
        exec_script(parse_script("append n <- 2"), df)
    assert exc.value.code == "E_APPEND_NOT_SET"


def test_duplicate_let():
    df = DataFlow({"n": IntVal(1)})
    with pytest.raises(ScriptError):
        exec_script(parse_script("let n = 2"), df)


def naive_run(statements, initial):
    """Reference interpreter: flat dict, python ints, same statement forms."""
    state = dict(initial)
    for stmt in statements:
        words = stmt.split()
        if words[0] == "let":
            state[words[1]] = int(words[3])
        elif words[0] == "rename":
            state[words[3]] = state.pop(words[1])
        else:  # name = name + 1
            state[words[0]] = state[words[0]] + 1
    return state


def test_script_effects_match_naive_interpreter():
    rng = random.Random(7)
    names = list("abcd")
    for _ in range(300):
        initial = {name: rng.randrange(5) for name in names if rng.random() < 0.7}
        df = DataFlow({n: IntVal(v) for n, v in initial.items()})
        bound = set(initial)
        statements = []
        for _ in range(rng.randrange(1, 6)):
            kind = rng.randrange(3)
            name = rng.choice(names)
            if kind == 0 and name not in bound:
                statements.append(f"let {name} = {rng.randrange(5)}")
                bound.add(name)
            elif kind == 1 and name in bound:
                statements.append(f"{name} = {name} + 1")
            elif kind == 2:
                other = rng.choice([n for n in names if n != name])
                if name in bound and other not in bound:
                    statements.append(f"rename {name} -> {other}")
                    bound.remove(name)
                    bound.add(other)
        before = dict(df.items())
        effects = exec_script(parse_script("\n".join(statements)), df)
        after = dict(df.items())
        expected = naive_run(statements, initial)
        assert {n: v.value for n, v in after.items()} == expected
        # every net change is accounted for by the effect summary
        touched = {e.path for e in effects}
        changed = {n for n in set(before) | set(after) if before.get(n) != after.get(n)}
        assert changed <= touched, "\n".join(statements)


# static typing -----------------------------------------------------------


def no_attrs(_type_name, _attr):
    return None


def test_infer_types():
    env = {"n": StaticType(BasicType.INTEGER), "s": StaticType(BasicType.STRING)}
    assert infer_expr_type(parse_expr("n + 1"), env, no_attrs) == StaticType(BasicType.INTEGER)
    assert infer_expr_type(parse_expr("n + 1.5"), env, no_attrs) == StaticType(BasicType.FLOAT)
    assert infer_expr_type(parse_expr('s == "x"'), env, no_attrs) == StaticType(BasicType.BOOLEAN)


def test_infer_rejects_mismatch():
    env = {"n": StaticType(BasicType.INTEGER), "s": StaticType(BasicType.STRING)}
    with pytest.raises(ExprTypeError) as exc:
        infer_expr_type(parse_expr("n + s"), env, no_attrs)
    assert exc.value.code == "E_TYPE_MISMATCH"
    with pytest.raises(ExprTypeError):
        infer_expr_type(parse_expr("s < 3"), env, no_attrs)
    with pytest.raises(ExprTypeError):
        infer_expr_type(parse_expr("not n"), env, no_attrs)


def test_infer_membership_and_empty_set():
    env = {"tags": StaticType(BasicType.STRING, None, True),
           "n": StaticType(BasicType.INTEGER)}
    assert infer_expr_type(parse_expr('"x" in tags'), env, no_attrs) \
        == StaticType(BasicType.BOOLEAN)
    assert infer_expr_type(parse_expr("n in []"), env, no_attrs) \
        == StaticType(BasicType.BOOLEAN)
    with pytest.raises(ExprTypeError):
        infer_expr_type(parse_expr("n in tags"), env, no_attrs)


def test_collect_paths():
    expr = parse_expr("a.b + c * (d.e.f - 2)")
    assert collect_paths(expr) == [("a", "b"), ("c",), ("d", "e", "f")]
