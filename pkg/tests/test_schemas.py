"""Schema text format, registry behavior and instance validation."""

import pytest

from weboracle.schemas import (
    SchemaParseError,
    SchemaRegistry,
    SchemaRegistryError,
    SchemaValidationError,
    SymbolInstance,
    parse_schema_text,
    validate,
)


GOOD = """
schema Product {
    title: string;
    price: number ge=0;
    qty: integer optional;
}
"""


def test_parse_basic_declaration():
    decls = parse_schema_text(GOOD)
    assert len(decls) == 1
    decl = decls[0]
    assert decl.name == "Product"
    assert decl.field_names() == ("title", "price", "qty")
    assert not decl.fields[2].required


def test_parse_multiple_blocks():
    decls = parse_schema_text("schema A { x: integer; }\nschema B { y: string; }")
    assert [d.name for d in decls] == ["A", "B"]


def test_parse_list_and_object_kinds():
    decls = parse_schema_text(
        "schema Row { tags: list(string); owner: object(Person); }"
    )
    kinds = {f.name: f.kind.name for f in decls[0].fields}
    assert kinds == {"tags": "list", "owner": "object"}


def test_parse_rejects_garbage():
    with pytest.raises(SchemaParseError):
        parse_schema_text("not a schema at all")
    with pytest.raises(SchemaParseError):
        parse_schema_text("schema X { broken")
    with pytest.raises(SchemaParseError):
        parse_schema_text("schema X { a: unknown_kind; }")


def test_parse_rejects_bad_constraints():
    with pytest.raises(SchemaParseError):
        parse_schema_text("schema X { a: string ge=0; }")
    with pytest.raises(SchemaParseError):
        parse_schema_text("schema X { a: integer pattern=x; }")
    with pytest.raises(SchemaParseError):
        parse_schema_text("schema X { a: string pattern=[; }")


def test_to_text_round_trips():
    decl = parse_schema_text(GOOD)[0]
    again = parse_schema_text(decl.to_text())[0]
    assert again == decl


def test_registry_conflicts_and_idempotence():
    decl = parse_schema_text("schema P { x: integer; }")[0]
    reg = SchemaRegistry([decl])
    reg.register(decl)  # identical: fine
    other = parse_schema_text("schema P { x: string; }")[0]
    with pytest.raises(SchemaRegistryError):
        reg.register(other)
    assert "P" in reg and reg.names() == ["P"]
    clone = reg.copy()
    clone.register(parse_schema_text("schema Q { y: number; }")[0])
    assert "Q" in clone and "Q" not in reg


def test_validate_builds_instances():
    decl = parse_schema_text(GOOD)[0]
    sym = validate(decl, {"title": "pen", "price": 2, "noise": "ignored"})
    assert isinstance(sym, SymbolInstance)
    assert sym.values["title"] == "pen"
    assert sym.values["price"] == 2
    assert sym.values["qty"] is None  # optional missing becomes None
    assert "noise" not in sym.values


def test_validate_nested_object():
    reg = SchemaRegistry(
        parse_schema_text(
            "schema Person { name: string; }\nschema Row { owner: object(Person); }"
        )
    )
    sym = validate(reg.resolve("Row"), {"owner": {"name": "Ada"}}, reg)
    assert sym.values["owner"].values == {"name": "Ada"}


def test_validate_rejections():
    decl = parse_schema_text(GOOD)[0]
    with pytest.raises(SchemaValidationError):
        validate(decl, {"price": 2.0})  # title missing
    with pytest.raises(SchemaValidationError):
        validate(decl, {"title": "pen", "price": "two"})
    with pytest.raises(SchemaValidationError):
        validate(decl, {"title": "pen", "price": -1.0})  # ge=0
    with pytest.raises(SchemaValidationError):
        validate(decl, {"title": "pen", "price": True})  # bool is not a number
    with pytest.raises(SchemaValidationError):
        validate(decl, "not an object")
