import pytest
from hypothesis import given, strategies as st

from flowforge.dataflow import DataFlow, append_to_collection
from flowforge.errors import CorruptImageError, DataflowError
from flowforge.values import (
    CollectionVal,
    IntVal,
    RecordVal,
    StringVal,
)


def test_write_then_read():
    df = DataFlow()
    df.write(("x",), IntVal(7))
    assert df.read(("x",)) == IntVal(7)


def test_nested_read_and_write():
    df = DataFlow()
    article = RecordVal("Article", {"title": StringVal("a"), "body": StringVal("b")})
    df.write(("article",), article)
    assert df.read(("article", "title")) == StringVal("a")
    df.write(("article", "title"), StringVal("z"))
    assert df.read(("article", "title")) == StringVal("z")
    assert df.read(("article", "body")) == StringVal("b")


def test_read_absent_is_null_read():
    df = DataFlow()
    with pytest.raises(DataflowError) as exc:
        df.read(("x",))
    assert exc.value.code == "E_NULL_READ"


def test_descend_into_scalar():
    df = DataFlow()
    df.write(("x",), IntVal(1))
    with pytest.raises(DataflowError) as exc:
        df.read(("x", "attr"))
    assert exc.value.code == "E_NOT_A_RECORD"


def test_kind_stability():
    df = DataFlow()
    df.write(("x",), IntVal(1))
    with pytest.raises(DataflowError) as exc:
        df.write(("x",), StringVal("s"))
    assert exc.value.code == "E_TYPE_MISMATCH"


def test_push_pop_shadowing():
    df = DataFlow({"n": IntVal(1)})
    df.push_frame({"n": IntVal(2)})
    assert df.read(("n",)) == IntVal(2)
    df.pop_frame()
    assert df.read(("n",)) == IntVal(1)


def test_pop_restores_absence():
    df = DataFlow()
    df.push_frame({"item": IntVal(5)})
    assert df.read(("item",)) == IntVal(5)
    df.pop_frame()
    with pytest.raises(DataflowError):
        df.read(("item",))


def test_pop_base_rejected():
    df = DataFlow()
    with pytest.raises(DataflowError) as exc:
        df.pop_frame()
    assert exc.value.code == "E_POP_BASE"


def test_write_existing_updates_owning_frame():
    df = DataFlow({"n": IntVal(1)})
    df.push_frame({"item": IntVal(0)})
    df.write(("n",), IntVal(9))
    df.pop_frame()
    assert df.read(("n",)) == IntVal(9)


def test_new_names_bind_innermost():
    df = DataFlow()
    df.push_frame({})
    df.write(("temp",), IntVal(3))
    df.pop_frame()
    with pytest.raises(DataflowError):
        df.read(("temp",))


def test_loop_frame_attribute_read():
    df = DataFlow()
    item = RecordVal("Comment", {"body": StringVal("nice")})
    df.push_frame({"item": item})
    assert df.read(("item", "body")) == StringVal("nice")


def test_append():
    df = DataFlow({"tags": CollectionVal(())})
    append_to_collection(df, ("tags",), StringVal("rust"))
    assert df.read(("tags",)) == CollectionVal((StringVal("rust"),))
    with pytest.raises(DataflowError) as exc:
        append_to_collection(df, ("tags",), IntVal(1))
    assert exc.value.code == "E_TYPE_MISMATCH"
    with pytest.raises(DataflowError) as exc:
        append_to_collection(df, ("absent",), IntVal(1))
    assert exc.value.code == "E_APPEND_NOT_SET"


def test_rename():
    df = DataFlow({"articleList": IntVal(1), "other": IntVal(2)})
    df.rename("articleList", "articles")
    assert df.read(("articles",)) == IntVal(1)
    with pytest.raises(DataflowError):
        df.read(("articleList",))
    with pytest.raises(DataflowError) as exc:
        df.rename("articles", "other")
    assert exc.value.code == "E_RENAME_TARGET_EXISTS"


def test_snapshot_round_trip_empty():
    df = DataFlow()
    assert DataFlow.restore(df.snapshot()) == df


def test_snapshot_round_trip_mid_flow():
    df = DataFlow()
    articles = CollectionVal(tuple(
        RecordVal("Article", {"slug": StringVal(f"s{i}")}, i) for i in range(3)))
    df.write(("articles",), articles)
    df.write(("selectedSlug",), StringVal("s1"))
    df.push_frame({"item": IntVal(0)})
    restored = DataFlow.restore(df.snapshot())
    assert restored == df
    assert restored.snapshot() == df.snapshot()


def test_restore_rejects_garbage():
    with pytest.raises(CorruptImageError):
        DataFlow.restore(b"{truncated")
    with pytest.raises(CorruptImageError):
        DataFlow.restore(b'{"frames": []}')
    with pytest.raises(CorruptImageError):
        DataFlow.restore(b'{"frames": [{"x": {"$kind": "NOPE"}}]}')


# property tests against a plain stack-of-dicts oracle


class Oracle:
    def __init__(self):
        self.frames = [{}]

    def write(self, name, value):
        for frame in reversed(self.frames):
            if name in frame:
                frame[name] = value
                return
        self.frames[-1][name] = value

    def read(self, name):
        for frame in reversed(self.frames):
            if name in frame:
                return frame[name]
        return None

    def push(self, bindings):
        self.frames.append(dict(bindings))

    def pop(self):
        self.frames.pop()


ops = st.lists(st.one_of(
    st.tuples(st.just("write"), st.sampled_from("abcde"), st.integers(-5, 5)),
    st.tuples(st.just("push"), st.sampled_from("abcde"), st.integers(-5, 5)),
    st.tuples(st.just("pop"), st.just(""), st.just(0)),
    st.tuples(st.just("read"), st.sampled_from("abcde"), st.just(0)),
), max_size=40)


@given(ops)
def test_dataflow_matches_oracle(sequence):
    df = DataFlow()
    oracle = Oracle()
    for op, name, number in sequence:
        if op == "write":
            existing = oracle.read(name)
            if existing is not None:
                df.write((name,), IntVal(number))
                oracle.write(name, IntVal(number))
            else:
                df.write((name,), IntVal(number))
                oracle.write(name, IntVal(number))
        elif op == "push":
            df.push_frame({name: IntVal(number)})
            oracle.push({name: IntVal(number)})
        elif op == "pop":
            if len(oracle.frames) > 1:
                df.pop_frame()
                oracle.pop()
        else:
            expected = oracle.read(name)
            if expected is None:
                with pytest.raises(DataflowError):
                    df.read((name,))
            else:
                assert df.read((name,)) == expected
    # snapshot round-trip preserves every observation
    restored = DataFlow.restore(df.snapshot())
    for name in "abcde":
        expected = oracle.read(name)
        if expected is None:
            with pytest.raises(DataflowError):
                restored.read((name,))
        else:
            assert restored.read((name,)) == expected
