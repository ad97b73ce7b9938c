import random

import pytest

from flowforge import DocumentStore
from flowforge.errors import StoreError
from flowforge.model import CriterionOp, derive_entity_schemas
from flowforge.store import ResolvedCriterion
from flowforge.values import (
    CollectionVal,
    IntVal,
    RecordVal,
    StringVal,
    date_value,
)
from flowforge import demo as conduit_demo


def crit(path, op, value):
    return ResolvedCriterion(path, op, value)


def test_store_three_articles_distinct_ids(seeded_store):
    ids = seeded_store.all_ids("Article")
    assert len(ids) == 3
    assert len(set(ids)) == 3


def test_schema_violation(seeded_store):
    bad = RecordVal("Article", {"slug": IntVal(1)})
    with pytest.raises(StoreError) as exc:
        seeded_store.store("Article", bad)
    assert exc.value.code == "E_SCHEMA_VIOLATION"


def test_retrieve_all_in_insertion_order(seeded_store):
    result = seeded_store.retrieve("Article", [], want_set=True)
    assert isinstance(result, CollectionVal)
    slugs = [r.attrs["slug"].value for r in result.items]
    assert slugs == [a["slug"] for a in conduit_demo.SEED_ARTICLES]
    assert all(r.entity_id is not None for r in result.items)


def test_retrieve_single_not_found(seeded_store):
    with pytest.raises(StoreError) as exc:
        seeded_store.retrieve("Article", [crit("slug", CriterionOp.EQ, StringVal("x"))],
                              want_set=False)
    assert exc.value.code == "E_NOT_FOUND"


def test_retrieve_single_ambiguous(seeded_store):
    with pytest.raises(StoreError) as exc:
        seeded_store.retrieve("Article", [], want_set=False)
    assert exc.value.code == "E_AMBIGUOUS"


def test_update_via_entity_id(seeded_store, conduit_domain):
    article = seeded_store.retrieve(
        "Article", [crit("slug", CriterionOp.EQ, StringVal("tiny-habits"))],
        want_set=False)
    size_before = seeded_store.count("Article")
    attrs = dict(article.attrs)
    attrs["title"] = StringVal("Tinier Habits")
    updated = RecordVal("Article", attrs, article.entity_id)
    ids = seeded_store.store("Article", updated)
    assert ids == [article.entity_id]
    assert seeded_store.count("Article") == size_before
    again = seeded_store.retrieve(
        "Article", [crit("slug", CriterionOp.EQ, StringVal("tiny-habits"))],
        want_set=False)
    assert again.attrs["title"] == StringVal("Tinier Habits")


def test_contains_and_ordering(seeded_store):
    rust = seeded_store.retrieve(
        "Article",
        [crit("tagList", CriterionOp.CONTAINS, StringVal("rust")),
         crit("createdAt", CriterionOp.GT, date_value("2024-01-01"))],
        want_set=True)
    assert [r.attrs["slug"].value for r in rust.items] == ["rust-in-production"]


def test_string_contains(seeded_store):
    hits = seeded_store.retrieve(
        "Article", [crit("title", CriterionOp.CONTAINS, StringVal("Rust"))],
        want_set=True)
    assert len(hits.items) == 1


def test_delete_all(seeded_store):
    n = seeded_store.count("Article")
    assert seeded_store.delete("Article", []) == n
    assert seeded_store.count("Article") == 0


def test_delete_one(seeded_store):
    assert seeded_store.delete(
        "Article", [crit("slug", CriterionOp.EQ, StringVal("welcome-aboard"))]) == 1
    rest = seeded_store.retrieve("Article", [], want_set=True)
    assert len(rest.items) == 2


def test_delete_none(seeded_store):
    assert seeded_store.delete(
        "Article", [crit("slug", CriterionOp.EQ, StringVal("nope"))]) == 0
    assert seeded_store.count("Article") == 3


def test_criterion_type_checks(seeded_store):
    with pytest.raises(StoreError) as exc:
        seeded_store.retrieve("Article", [crit("slug", CriterionOp.EQ, IntVal(3))],
                              want_set=True)
    assert exc.value.code == "E_TYPE_MISMATCH"
    with pytest.raises(StoreError) as exc:
        seeded_store.retrieve("Article", [crit("tagList", CriterionOp.LT, StringVal("a"))],
                              want_set=True)
    assert exc.value.code == "E_SET_SCALAR_MISMATCH"


def test_ids_never_reused(tmp_path, conduit_bundle, conduit_domain):
    schemas = conduit_bundle.entity_schemas()
    with DocumentStore(tmp_path / "s", schemas) as store:
        ids1 = conduit_demo.seed_store(store, conduit_domain)
        store.delete("Article", [])
        ids2 = conduit_demo.seed_store(store, conduit_domain)
    assert not set(ids1) & set(ids2)


def test_durability_across_reopen(tmp_path, conduit_bundle, conduit_domain):
    schemas = conduit_bundle.entity_schemas()
    with DocumentStore(tmp_path / "s", schemas) as store:
        conduit_demo.seed_store(store, conduit_domain)
        store.delete("Article", [crit("slug", CriterionOp.EQ, StringVal("tiny-habits"))])
    with DocumentStore(tmp_path / "s", schemas) as store:
        docs = store.retrieve("Article", [], want_set=True)
        assert [r.attrs["slug"].value for r in docs.items] == [
            "welcome-aboard", "rust-in-production"]


def test_lock_blocks_second_handle(tmp_path, conduit_bundle):
    schemas = conduit_bundle.entity_schemas()
    store = DocumentStore(tmp_path / "s", schemas)
    try:
        with pytest.raises(StoreError) as exc:
            DocumentStore(tmp_path / "s", schemas)
        assert exc.value.code == "E_LOCKED"
    finally:
        store.close()
    # after close the root opens again
    DocumentStore(tmp_path / "s", schemas).close()


def test_schema_fingerprint_mismatch(tmp_path, conduit_bundle, conduit_domain):
    with DocumentStore(tmp_path / "s", conduit_bundle.entity_schemas()):
        pass
    other = derive_entity_schemas(conduit_domain)[:1]
    with pytest.raises(StoreError) as exc:
        DocumentStore(tmp_path / "s", other)
    assert exc.value.code == "E_SCHEMA_VIOLATION"


# randomized agreement with a linear-scan oracle (the acceptance suite
# runs the full 500-trial version)

OPS = [CriterionOp.EQ, CriterionOp.NEQ, CriterionOp.LT, CriterionOp.LTE,
       CriterionOp.GT, CriterionOp.GTE]


def oracle_matches(doc, criteria):
    for c in criteria:
        field = doc[c.field_path]
        if c.op is CriterionOp.CONTAINS:
            ok = c.value.value in field
        else:
            v = c.value.value
            ok = {CriterionOp.EQ: field == v, CriterionOp.NEQ: field != v,
                  CriterionOp.LT: field < v, CriterionOp.LTE: field <= v,
                  CriterionOp.GT: field > v, CriterionOp.GTE: field >= v}[c.op]
        if not ok:
            return False
    return True


def random_trial(rng, store, domain, n_docs=30):
    from flowforge.model import make_record

    docs = []
    for i in range(n_docs):
        rec = make_record(domain, "Comment", {
            "authorName": StringVal(rng.choice("abcde")),
            "body": StringVal("".join(rng.choices("xyz", k=3))),
            "createdAt": date_value(f"2024-01-{rng.randrange(1, 28):02d}"),
        })
        store.store("Comment", rec)
        docs.append({"authorName": rec.attrs["authorName"].value,
                     "body": rec.attrs["body"].value})
    criteria = []
    for _ in range(rng.randrange(0, 3)):
        field = rng.choice(["authorName", "body"])
        op = rng.choice(OPS + [CriterionOp.CONTAINS])
        value = StringVal(rng.choice("abcdexyz"))
        criteria.append(crit(field, op, value))
    got = store.retrieve("Comment", criteria, want_set=True)
    got_keys = [(r.attrs["authorName"].value, r.attrs["body"].value) for r in got.items]
    want_keys = [(d["authorName"], d["body"]) for d in docs if oracle_matches(d, criteria)]
    assert got_keys == want_keys
    # delete removes exactly the retrieve set
    before = store.count("Comment")
    deleted = store.delete("Comment", criteria)
    assert deleted == len(want_keys)
    assert store.count("Comment") == before - deleted
    store.delete("Comment", [])


def test_retrieve_delete_agree_with_oracle(tmp_path, conduit_bundle, conduit_domain):
    rng = random.Random(13)
    with DocumentStore(tmp_path / "s", conduit_bundle.entity_schemas()) as store:
        for _ in range(40):
            random_trial(rng, store, conduit_domain)


def test_conjunction_is_intersection(seeded_store):
    c1 = crit("favoritesCount", CriterionOp.GT, IntVal(4))
    c2 = crit("tagList", CriterionOp.CONTAINS, StringVal("rust"))
    both = seeded_store.retrieve("Article", [c1, c2], want_set=True)
    only1 = seeded_store.retrieve("Article", [c1], want_set=True)
    only2 = seeded_store.retrieve("Article", [c2], want_set=True)
    ids = lambda coll: {r.entity_id for r in coll.items}  # noqa: E731
    assert ids(both) == ids(only1) & ids(only2)
