import pytest

from flowforge.errors import ModelError, NotFoundError, UnknownTypeError
from flowforge.model import (
    AttrDef,
    DomainModel,
    TypeDef,
    TypeRef,
    derive_entity_schemas,
    make_record,
    resolve_type_ref,
)
from flowforge.values import (
    BasicType,
    CollectionVal,
    IntVal,
    StringVal,
    canonical_json,
)


def test_resolve_basic_ref(conduit_domain):
    rt = resolve_type_ref(conduit_domain, TypeRef(BasicType.STRING))
    assert rt.basic is BasicType.STRING
    assert not rt.is_set


def test_resolve_complex_set_ref(conduit_domain):
    rt = resolve_type_ref(conduit_domain, TypeRef("Comment", is_set=True))
    assert rt.type_def.name == "Comment"
    assert rt.is_set


def test_resolve_unknown_type(conduit_domain):
    with pytest.raises(UnknownTypeError) as exc:
        resolve_type_ref(conduit_domain, TypeRef("Missing"))
    assert exc.value.code == "E_UNKNOWN_TYPE"


def test_lookup(conduit_domain):
    assert conduit_domain.lookup("service", "ProcessMarkdown").name == "ProcessMarkdown"
    assert conduit_domain.lookup("activity", "ShowArticle").name == "ShowArticle"
    with pytest.raises(NotFoundError):
        conduit_domain.lookup("io", "NoSuchIO")


def test_conduit_schemas(conduit_domain):
    schemas = derive_entity_schemas(conduit_domain)
    assert [s.collection for s in schemas] == ["Article", "Comment"]


def test_empty_domain_schemas():
    assert derive_entity_schemas(DomainModel("Empty")) == []


def test_article_schema_shape(conduit_domain):
    # hand-derived from the fixture type: every scalar flattens, the set
    # becomes an array, and the synthetic id comes first
    schema = derive_entity_schemas(conduit_domain)[0]
    assert schema.collection == "Article"
    assert schema.id_field == "_id"
    assert schema.fields[0].path == "_id"
    by_path = {f.path: f for f in schema.fields}
    assert by_path["slug"].basic is BasicType.STRING
    assert by_path["tagList"].repeated and by_path["tagList"].basic is BasicType.STRING
    assert by_path["createdAt"].basic is BasicType.DATE
    assert by_path["favoritesCount"].basic is BasicType.INTEGER
    assert set(by_path) == {"_id", "slug", "title", "description", "body",
                            "tagList", "createdAt", "favoritesCount"}


def test_nested_scalar_complex_flattens():
    dom = DomainModel("N", types=[
        TypeDef("Inner", [AttrDef("x", TypeRef(BasicType.INTEGER))]),
        TypeDef("Outer", [AttrDef("inner", TypeRef("Inner")),
                          AttrDef("many", TypeRef("Inner", is_set=True))]),
    ])
    outer = derive_entity_schemas(dom)[1]
    paths = [f.path for f in outer.fields]
    assert paths == ["_id", "inner", "inner.x", "many"]
    by_path = {f.path: f for f in outer.fields}
    assert by_path["inner"].type_name == "Inner" and not by_path["inner"].repeated
    assert by_path["inner.x"].basic is BasicType.INTEGER
    assert by_path["many"].type_name == "Inner" and by_path["many"].repeated


def test_scalar_self_reference_rejected():
    dom = DomainModel("R", types=[
        TypeDef("Node", [AttrDef("next", TypeRef("Node"))]),
    ])
    with pytest.raises(ModelError) as exc:
        derive_entity_schemas(dom)
    assert exc.value.code == "E_RECURSIVE_TYPE"


def test_mutually_recursive_scalars_rejected():
    dom = DomainModel("R", types=[
        TypeDef("A", [AttrDef("b", TypeRef("B"))]),
        TypeDef("B", [AttrDef("a", TypeRef("A"))]),
    ])
    with pytest.raises(ModelError):
        derive_entity_schemas(dom)


def test_set_self_reference_allowed():
    dom = DomainModel("R", types=[
        TypeDef("Node", [AttrDef("children", TypeRef("Node", is_set=True))]),
    ])
    schema = derive_entity_schemas(dom)[0]
    assert [f.path for f in schema.fields] == ["_id", "children"]


def test_schema_determinism(conduit_domain):
    one = derive_entity_schemas(conduit_domain)
    two = derive_entity_schemas(conduit_domain)
    as_json = lambda schemas: canonical_json([  # noqa: E731
        [(f.path, f.basic.value if f.basic else f.type_name, f.repeated)
         for f in s.fields] for s in schemas])
    assert as_json(one) == as_json(two)
    assert one == two


def test_make_record_validates(conduit_domain):
    with pytest.raises(ModelError) as exc:
        make_record(conduit_domain, "Comment", {
            "authorName": StringVal("ann"),
            "body": IntVal(3),  # wrong kind
            "createdAt": StringVal("2024-01-01"),
        })
    assert exc.value.code == "E_TYPE_MISMATCH"


def test_make_record_requires_all_attributes(conduit_domain):
    with pytest.raises(ModelError):
        make_record(conduit_domain, "Comment", {"body": StringVal("hi")})


def test_make_record_orders_attributes(conduit_domain):
    from flowforge.values import date_value

    rec = make_record(conduit_domain, "Comment", {
        "createdAt": date_value("2024-01-01"),
        "body": StringVal("hi"),
        "authorName": StringVal("ann"),
    })
    assert list(rec.attrs) == ["authorName", "body", "createdAt"]
