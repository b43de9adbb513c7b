"""Typed symbol schemas for values extracted from GUI state.

A schema declares the shape of a symbol (a structured value pulled out of a
page, such as a cart summary). Declarations are written in a small text
format so an inference model can emit them inline:

    schema Product {
        title: string;
        price: number ge=0;
        quantity: integer optional gt=0;
    }

Field kinds: string, integer, number, boolean, list(<kind>),
object(<SchemaName>), optional(<kind>). A field marked ``optional`` may be
absent or null. Numeric constraints: ge, gt, le, lt. String and list
constraints: min_len, max_len, pattern (full match).

Validation turns a plain JSON-like value into a SymbolInstance whose
attribute surface is exactly the declared fields, nothing else.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import WeboracleError

_NUMERIC_CONSTRAINTS = ("ge", "gt", "le", "lt")
_SIZE_CONSTRAINTS = ("min_len", "max_len", "pattern")
_SCALAR_KINDS = ("string", "integer", "number", "boolean")

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class SchemaParseError(WeboracleError):
    """The schema text does not follow the declaration grammar."""


class SchemaValidationError(WeboracleError):
    """A value does not conform to its schema.

    ``path`` locates the offending part, e.g. ``items[2].price``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class SchemaRegistryError(WeboracleError):
    """Duplicate or unknown schema name."""


# ---------------------------------------------------------------------------
# Declarations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldKind:
    """A field type: ``name`` is one of the scalar kinds, "list", "object"
    or "optional"; ``inner`` holds the element kind (list/optional) or the
    referenced schema name (object)."""

    name: str
    inner: "FieldKind | str | None" = None

    def to_text(self) -> str:
        if self.name in _SCALAR_KINDS:
            return self.name
        if self.name == "object":
            return f"object({self.inner})"
        inner = self.inner.to_text() if isinstance(self.inner, FieldKind) else str(self.inner)
        return f"{self.name}({inner})"


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: FieldKind
    required: bool = True
    constraints: tuple[tuple[str, object], ...] = ()

    def to_text(self) -> str:
        parts = [f"{self.name}: {self.kind.to_text()}"]
        if not self.required:
            parts.append("optional")
        for key, value in self.constraints:
            parts.append(f"{key}={value}")
        return " ".join(parts)


@dataclass(frozen=True)
class SchemaDecl:
    name: str
    fields: tuple[FieldSpec, ...]

    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def to_text(self) -> str:
        lines = [f"schema {self.name} {{"]
        for f in self.fields:
            lines.append(f"    {f.to_text()};")
        lines.append("}")
        return "\n".join(lines)


@dataclass
class SymbolInstance:
    """A validated value. Only declared field names are addressable."""

    schema_name: str
    values: dict[str, object] = field(default_factory=dict)

    def get(self, name: str) -> object:
        if name not in self.values:
            raise KeyError(name)
        return self.values[name]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SymbolInstance):
            return NotImplemented
        return self.schema_name == other.schema_name and self.values == other.values

    def __repr__(self) -> str:  # compact, used in assertion messages
        inner = ", ".join(f"{k}={v!r}" for k, v in self.values.items())
        return f"{self.schema_name}({inner})"


class SchemaRegistry:
    """Name to declaration map. Re-registering an identical declaration is
    a no-op; a conflicting redefinition is an error."""

    def __init__(self, decls: "list[SchemaDecl] | None" = None):
        self._decls: dict[str, SchemaDecl] = {}
        for decl in decls or []:
            self.register(decl)

    def register(self, decl: SchemaDecl) -> None:
        existing = self._decls.get(decl.name)
        if existing is not None and existing != decl:
            raise SchemaRegistryError(
                f"schema {decl.name!r} already registered with a different definition"
            )
        self._decls[decl.name] = decl

    def resolve(self, name: str) -> SchemaDecl:
        try:
            return self._decls[name]
        except KeyError:
            raise SchemaRegistryError(f"unknown schema {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._decls

    def names(self) -> list[str]:
        return sorted(self._decls)

    def copy(self) -> "SchemaRegistry":
        child = SchemaRegistry()
        child._decls = dict(self._decls)
        return child


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------


def parse_schema_text(text: str) -> list[SchemaDecl]:
    """Parse one or more ``schema Name { ... }`` blocks."""

    decls: list[SchemaDecl] = []
    pos = 0
    n = len(text)
    while True:
        m = re.compile(r"\bschema\b").search(text, pos)
        if m is None:
            tail = text[pos:].strip()
            if tail and not decls:
                raise SchemaParseError("no schema declaration found")
            if tail and decls:
                raise SchemaParseError(f"trailing text after declarations: {tail[:40]!r}")
            break
        head = text[pos:m.start()].strip()
        if head:
            raise SchemaParseError(f"unexpected text before declaration: {head[:40]!r}")
        pos = m.end()
        name_m = _NAME_RE.match(text, _skip_ws(text, pos))
        if name_m is None:
            raise SchemaParseError("expected schema name after 'schema'")
        name = name_m.group(0)
        pos = _skip_ws(text, name_m.end())
        if pos >= n or text[pos] != "{":
            raise SchemaParseError(f"expected '{{' after schema name {name!r}")
        close = text.find("}", pos)
        if close < 0:
            raise SchemaParseError(f"unterminated schema body for {name!r}")
        body = text[pos + 1 : close]
        decls.append(SchemaDecl(name=name, fields=tuple(_parse_fields(name, body))))
        pos = close + 1
    if not decls:
        raise SchemaParseError("no schema declaration found")
    seen: set[str] = set()
    for d in decls:
        if d.name in seen:
            raise SchemaParseError(f"duplicate schema name {d.name!r} in one block")
        seen.add(d.name)
    return decls


def schemas_to_text(decls: list[SchemaDecl]) -> str:
    return "\n\n".join(d.to_text() for d in decls)


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos].isspace():
        pos += 1
    return pos


def _parse_fields(schema_name: str, body: str) -> list[FieldSpec]:
    fields: list[FieldSpec] = []
    seen: set[str] = set()
    for raw in body.split(";"):
        item = raw.strip()
        if not item:
            continue
        if ":" not in item:
            raise SchemaParseError(f"{schema_name}: field {item!r} missing ':'")
        fname, rest = item.split(":", 1)
        fname = fname.strip()
        if not _NAME_RE.fullmatch(fname):
            raise SchemaParseError(f"{schema_name}: bad field name {fname!r}")
        if fname in seen:
            raise SchemaParseError(f"{schema_name}: duplicate field {fname!r}")
        seen.add(fname)
        tokens = rest.split()
        if not tokens:
            raise SchemaParseError(f"{schema_name}.{fname}: missing kind")
        kind = _parse_kind(schema_name, fname, tokens[0])
        required = True
        constraints: list[tuple[str, object]] = []
        for tok in tokens[1:]:
            if tok == "optional":
                required = False
            elif tok == "required":
                required = True
            elif "=" in tok:
                key, value = tok.split("=", 1)
                constraints.append(_parse_constraint(schema_name, fname, kind, key, value))
            else:
                raise SchemaParseError(f"{schema_name}.{fname}: unexpected token {tok!r}")
        fields.append(FieldSpec(fname, kind, required, tuple(constraints)))
    if not fields:
        raise SchemaParseError(f"{schema_name}: schema has no fields")
    return fields


def _parse_kind(schema_name: str, fname: str, text: str) -> FieldKind:
    text = text.strip()
    if text in _SCALAR_KINDS:
        return FieldKind(text)
    m = re.fullmatch(r"(list|optional|object)\((.+)\)", text)
    if m is None:
        raise SchemaParseError(f"{schema_name}.{fname}: unknown kind {text!r}")
    outer, inner = m.group(1), m.group(2)
    if outer == "object":
        if not _NAME_RE.fullmatch(inner):
            raise SchemaParseError(f"{schema_name}.{fname}: bad schema reference {inner!r}")
        return FieldKind("object", inner)
    return FieldKind(outer, _parse_kind(schema_name, fname, inner))


def _parse_constraint(
    schema_name: str, fname: str, kind: FieldKind, key: str, value: str
) -> tuple[str, object]:
    base = _base_kind(kind)
    if key in _NUMERIC_CONSTRAINTS:
        if base not in ("integer", "number"):
            raise SchemaParseError(
                f"{schema_name}.{fname}: constraint {key} needs a numeric kind"
            )
        try:
            num = int(value)
        except ValueError:
            try:
                num = float(value)
            except ValueError:
                raise SchemaParseError(
                    f"{schema_name}.{fname}: bad numeric bound {value!r}"
                ) from None
        return key, num
    if key == "pattern":
        if base != "string":
            raise SchemaParseError(f"{schema_name}.{fname}: pattern needs a string kind")
        try:
            re.compile(value)
        except re.error as exc:
            raise SchemaParseError(f"{schema_name}.{fname}: bad pattern: {exc}") from None
        return key, value
    if key in ("min_len", "max_len"):
        if base != "string" and kind.name != "list" and not (
            kind.name == "optional"
            and isinstance(kind.inner, FieldKind)
            and kind.inner.name == "list"
        ):
            raise SchemaParseError(
                f"{schema_name}.{fname}: constraint {key} needs a string or list kind"
            )
        try:
            return key, int(value)
        except ValueError:
            raise SchemaParseError(
                f"{schema_name}.{fname}: bad length bound {value!r}"
            ) from None
    raise SchemaParseError(f"{schema_name}.{fname}: unknown constraint {key!r}")


def _base_kind(kind: FieldKind) -> str:
    while kind.name == "optional" and isinstance(kind.inner, FieldKind):
        kind = kind.inner
    return kind.name


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(
    decl: SchemaDecl,
    data: object,
    registry: "SchemaRegistry | None" = None,
    path: str = "",
) -> SymbolInstance:
    """Check ``data`` against ``decl`` and build a SymbolInstance.

    Unknown keys in the input are ignored. Missing optional fields become
    None. Booleans never satisfy integer or number fields.
    """

    root = path or decl.name
    if not isinstance(data, dict):
        raise SchemaValidationError(root, f"expected an object, got {_type_name(data)}")
    values: dict[str, object] = {}
    for spec in decl.fields:
        fpath = f"{root}.{spec.name}"
        if spec.name not in data or data[spec.name] is None:
            if spec.required and spec.name not in data:
                raise SchemaValidationError(fpath, "missing required field")
            if spec.required and data.get(spec.name) is None and spec.kind.name != "optional":
                if spec.name in data:
                    raise SchemaValidationError(fpath, "field must not be null")
            values[spec.name] = None
            continue
        values[spec.name] = _check_value(spec, spec.kind, data[spec.name], registry, fpath)
    return SymbolInstance(schema_name=decl.name, values=values)


def _check_value(
    spec: FieldSpec,
    kind: FieldKind,
    value: object,
    registry: "SchemaRegistry | None",
    path: str,
) -> object:
    if kind.name == "optional":
        if value is None:
            return None
        assert isinstance(kind.inner, FieldKind)
        return _check_value(spec, kind.inner, value, registry, path)
    if kind.name == "string":
        if not isinstance(value, str):
            raise SchemaValidationError(path, f"expected string, got {_type_name(value)}")
        _check_size(spec, value, path, "string")
        _check_pattern(spec, value, path)
        return value
    if kind.name == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaValidationError(path, f"expected integer, got {_type_name(value)}")
        _check_bounds(spec, value, path)
        return value
    if kind.name == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaValidationError(path, f"expected number, got {_type_name(value)}")
        _check_bounds(spec, value, path)
        return value
    if kind.name == "boolean":
        if not isinstance(value, bool):
            raise SchemaValidationError(path, f"expected boolean, got {_type_name(value)}")
        return value
    if kind.name == "list":
        if not isinstance(value, list):
            raise SchemaValidationError(path, f"expected list, got {_type_name(value)}")
        _check_size(spec, value, path, "list")
        assert isinstance(kind.inner, FieldKind)
        return [
            _check_value(spec, kind.inner, item, registry, f"{path}[{i}]")
            for i, item in enumerate(value)
        ]
    if kind.name == "object":
        if registry is None:
            raise SchemaValidationError(path, f"no registry to resolve schema {kind.inner!r}")
        try:
            target = registry.resolve(str(kind.inner))
        except SchemaRegistryError as exc:
            raise SchemaValidationError(path, str(exc)) from None
        return validate(target, value, registry, path)
    raise SchemaValidationError(path, f"unsupported kind {kind.name!r}")


def _check_bounds(spec: FieldSpec, value: "int | float", path: str) -> None:
    for key, bound in spec.constraints:
        assert isinstance(bound, (int, float)) or key == "pattern"
        if key == "ge" and not value >= bound:
            raise SchemaValidationError(path, f"value {value} violates ge={bound}")
        if key == "gt" and not value > bound:
            raise SchemaValidationError(path, f"value {value} violates gt={bound}")
        if key == "le" and not value <= bound:
            raise SchemaValidationError(path, f"value {value} violates le={bound}")
        if key == "lt" and not value < bound:
            raise SchemaValidationError(path, f"value {value} violates lt={bound}")


def _check_size(spec: FieldSpec, value: "str | list", path: str, label: str) -> None:
    for key, bound in spec.constraints:
        if key == "min_len" and len(value) < int(bound):  # type: ignore[arg-type]
            raise SchemaValidationError(path, f"{label} length {len(value)} below min_len={bound}")
        if key == "max_len" and len(value) > int(bound):  # type: ignore[arg-type]
            raise SchemaValidationError(path, f"{label} length {len(value)} above max_len={bound}")


def _check_pattern(spec: FieldSpec, value: str, path: str) -> None:
    for key, bound in spec.constraints:
        if key == "pattern" and re.fullmatch(str(bound), value) is None:
            raise SchemaValidationError(path, f"value {value!r} does not match pattern {bound!r}")


def _type_name(value: object) -> str:
    if value is None:
        return "null"
    return type(value).__name__
