"""The closed host surface reachable from assertion programs.

Two things live here: the fixed function whitelist (len, any, sorted,
regex and date helpers, ...) and the attribute tables that mediate every
attribute access on host values. Nothing outside these tables is
reachable, so a program can never touch the filesystem, the network or
the interpreter internals.

All functions take the evaluation context so iteration can be charged
against the step budget and callables (lambdas) can be invoked through
the interpreter.
"""

from __future__ import annotations

import datetime as _dt
import re as _re
from dataclasses import dataclass
from types import GeneratorType

from ..schemas import SchemaDecl, SchemaRegistryError, SymbolInstance
from ..trace import Element, Session, State
from .nodes import Span
from .verdicts import DslError, DslErrorKind

_PATTERN_CAP = 1_000
_TEXT_CAP = 200_000
_SENTINEL = object()


# ---------------------------------------------------------------------------
# Callable value kinds
# ---------------------------------------------------------------------------


@dataclass
class HostFunction:
    name: str
    impl: object  # (ctx, args, kwargs, span) -> value

    def __repr__(self) -> str:
        return f"<function {self.name}>"


@dataclass
class BoundMethod:
    name: str
    invoke: object  # (ctx, args, kwargs, span) -> value

    def __repr__(self) -> str:
        return f"<method {self.name}>"


class LambdaValue:
    def __init__(self, params, body, closure):
        self.params = params
        self.body = body
        self.closure = closure

    def __repr__(self) -> str:
        return f"<lambda ({', '.join(self.params)})>"


def type_name(value) -> str:
    if value is None:
        return "None"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, SymbolInstance):
        return f"symbol {value.schema_name}"
    if isinstance(value, SchemaDecl):
        return f"schema {value.name}"
    if isinstance(value, Session):
        return "session"
    if isinstance(value, State):
        return "state"
    if isinstance(value, Element):
        return "element"
    if isinstance(value, (HostFunction, BoundMethod, LambdaValue)):
        return "function"
    if isinstance(value, GeneratorType):
        return "iterator"
    if isinstance(value, _dt.datetime):
        return "datetime"
    if isinstance(value, _dt.date):
        return "date"
    if isinstance(value, _dt.timedelta):
        return "duration"
    if isinstance(value, _re.Match):
        return "match"
    return type(value).__name__


def _err(kind: DslErrorKind, message: str, span: Span) -> DslError:
    return DslError(kind, message, span)


def _mismatch(message: str, span: Span) -> DslError:
    return _err(DslErrorKind.TYPE_MISMATCH, message, span)


def _fault(message: str, span: Span) -> DslError:
    return _err(DslErrorKind.RUNTIME_FAULT, message, span)


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------


def _arity(name, args, low, high, span):
    if not (low <= len(args) <= high):
        if low == high:
            want = str(low)
        else:
            want = f"{low} to {high}"
        raise _mismatch(f"{name}() takes {want} arguments, got {len(args)}", span)


def _only_kwargs(name, kwargs, allowed, span):
    for key in kwargs:
        if key not in allowed:
            raise _mismatch(f"{name}() got an unexpected keyword argument {key!r}", span)


def _need_str(name, value, span, what="argument"):
    if not isinstance(value, str):
        raise _mismatch(f"{name}() {what} must be a string, got {type_name(value)}", span)
    return value


def _need_int(name, value, span, what="argument"):
    if isinstance(value, bool) or not isinstance(value, int):
        raise _mismatch(f"{name}() {what} must be an integer, got {type_name(value)}", span)
    return value


def _need_number(name, value, span):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _mismatch(f"{name}() needs a number, got {type_name(value)}", span)
    return value


def _as_key_func(ctx, key, span):
    if key is None:
        return None

    def call(item):
        return ctx.call_value(key, [item], span)

    return call


# ---------------------------------------------------------------------------
# Whitelisted functions
# ---------------------------------------------------------------------------


def _fn_len(ctx, args, kwargs, span):
    _arity("len", args, 1, 1, span)
    _only_kwargs("len", kwargs, (), span)
    value = args[0]
    if isinstance(value, (str, list, tuple, set, frozenset, dict, range)):
        return len(value)
    if isinstance(value, GeneratorType):
        raise _mismatch("len() needs a sized container, not an iterator", span)
    raise _mismatch(f"len() does not support {type_name(value)}", span)


def _fn_any(ctx, args, kwargs, span):
    _arity("any", args, 1, 1, span)
    _only_kwargs("any", kwargs, (), span)
    for item in ctx.iterate(args[0], span):
        if item:
            return True
    return False


def _fn_all(ctx, args, kwargs, span):
    _arity("all", args, 1, 1, span)
    _only_kwargs("all", kwargs, (), span)
    for item in ctx.iterate(args[0], span):
        if not item:
            return False
    return True


def _minmax(name, picker):
    def impl(ctx, args, kwargs, span):
        _arity(name, args, 1, 255, span)
        _only_kwargs(name, kwargs, ("key", "default"), span)
        if len(args) == 1:
            items = list(ctx.iterate(args[0], span))
        else:
            if "default" in kwargs:
                raise _mismatch(f"{name}() default needs a single iterable argument", span)
            items = list(args)
        if not items:
            if "default" in kwargs:
                return kwargs["default"]
            raise _fault(f"{name}() of an empty sequence", span)
        key = _as_key_func(ctx, kwargs.get("key"), span)
        try:
            if key is None:
                return picker(items)
            return picker(items, key=key)
        except TypeError:
            raise _mismatch(f"{name}() got values that do not compare", span) from None

    return impl


def _fn_sum(ctx, args, kwargs, span):
    _arity("sum", args, 1, 2, span)
    _only_kwargs("sum", kwargs, ("start",), span)
    start = kwargs.get("start", args[1] if len(args) == 2 else 0)
    if isinstance(start, str):
        raise _mismatch("sum() cannot start from a string", span)
    total = start
    for item in ctx.iterate(args[0], span):
        try:
            total = total + item
        except TypeError:
            raise _mismatch(
                f"sum() cannot add {type_name(item)} to {type_name(total)}", span
            ) from None
    return total


def _fn_sorted(ctx, args, kwargs, span):
    _arity("sorted", args, 1, 1, span)
    _only_kwargs("sorted", kwargs, ("key", "reverse"), span)
    items = list(ctx.iterate(args[0], span))
    key = _as_key_func(ctx, kwargs.get("key"), span)
    try:
        return sorted(items, key=key, reverse=bool(kwargs.get("reverse", False)))
    except TypeError:
        raise _mismatch("sorted() got values that do not compare", span) from None


def _fn_set(ctx, args, kwargs, span):
    _arity("set", args, 0, 1, span)
    _only_kwargs("set", kwargs, (), span)
    if not args:
        return set()
    out = set()
    for item in ctx.iterate(args[0], span):
        try:
            out.add(item)
        except TypeError:
            raise _mismatch(f"set() got an unhashable {type_name(item)}", span) from None
    return out


def _fn_zip(ctx, args, kwargs, span):
    _only_kwargs("zip", kwargs, (), span)
    iterators = [ctx.iterate(a, span) for a in args]

    def gen():
        if not iterators:
            return
        while True:
            row = []
            for it in iterators:
                item = next(it, _SENTINEL)
                if item is _SENTINEL:
                    return
                row.append(item)
            yield tuple(row)

    return gen()


def _fn_enumerate(ctx, args, kwargs, span):
    _arity("enumerate", args, 1, 2, span)
    _only_kwargs("enumerate", kwargs, ("start",), span)
    start = kwargs.get("start", args[1] if len(args) == 2 else 0)
    start = _need_int("enumerate", start, span, "start")
    source = ctx.iterate(args[0], span)

    def gen():
        i = start
        for item in source:
            yield (i, item)
            i += 1

    return gen()


def _fn_range(ctx, args, kwargs, span):
    _arity("range", args, 1, 3, span)
    _only_kwargs("range", kwargs, (), span)
    ints = [_need_int("range", a, span) for a in args]
    if len(ints) == 3 and ints[2] == 0:
        raise _fault("range() step must not be zero", span)
    return range(*ints)


def _fn_abs(ctx, args, kwargs, span):
    _arity("abs", args, 1, 1, span)
    _only_kwargs("abs", kwargs, (), span)
    return abs(_need_number("abs", args[0], span))


def _fn_round(ctx, args, kwargs, span):
    _arity("round", args, 1, 2, span)
    _only_kwargs("round", kwargs, ("ndigits",), span)
    value = _need_number("round", args[0], span)
    ndigits = kwargs.get("ndigits", args[1] if len(args) == 2 else None)
    if ndigits is None:
        return round(value)
    return round(value, _need_int("round", ndigits, span, "ndigits"))


def _fn_next(ctx, args, kwargs, span):
    _arity("next", args, 1, 2, span)
    _only_kwargs("next", kwargs, (), span)
    it = args[0]
    if not isinstance(it, GeneratorType):
        raise _mismatch(f"next() needs an iterator, got {type_name(it)}", span)
    ctx.tick(span)
    item = next(it, _SENTINEL)
    if item is _SENTINEL:
        if len(args) == 2:
            return args[1]
        raise _fault("next() hit an exhausted iterator", span)
    return item


def _fn_reversed(ctx, args, kwargs, span):
    _arity("reversed", args, 1, 1, span)
    _only_kwargs("reversed", kwargs, (), span)
    seq = args[0]
    if not isinstance(seq, (list, tuple, str, range)):
        raise _mismatch(f"reversed() does not support {type_name(seq)}", span)

    def gen():
        for item in reversed(seq):
            ctx.tick(span)
            yield item

    return gen()


def _fn_filter(ctx, args, kwargs, span):
    _arity("filter", args, 2, 2, span)
    _only_kwargs("filter", kwargs, (), span)
    pred, source = args
    items = ctx.iterate(source, span)

    def gen():
        for item in items:
            if pred is None:
                keep = bool(item)
            else:
                keep = bool(ctx.call_value(pred, [item], span))
            if keep:
                yield item

    return gen()


def _fn_map(ctx, args, kwargs, span):
    _arity("map", args, 2, 255, span)
    _only_kwargs("map", kwargs, (), span)
    func = args[0]
    iterators = [ctx.iterate(a, span) for a in args[1:]]

    def gen():
        while True:
            row = []
            for it in iterators:
                item = next(it, _SENTINEL)
                if item is _SENTINEL:
                    return
                row.append(item)
            yield ctx.call_value(func, row, span)

    return gen()


def _re_args(name, ctx, args, kwargs, span):
    _arity(name, args, 2, 2, span)
    _only_kwargs(name, kwargs, (), span)
    pattern = _need_str(name, args[0], span, "pattern")
    text = _need_str(name, args[1], span, "text")
    if len(pattern) > _PATTERN_CAP:
        raise _err(DslErrorKind.BUDGET_EXCEEDED, f"{name}() pattern too long", span)
    if len(text) > _TEXT_CAP:
        raise _err(DslErrorKind.BUDGET_EXCEEDED, f"{name}() text too long", span)
    ctx.tick(span, 10)
    return pattern, text


def _fn_re_match(ctx, args, kwargs, span):
    pattern, text = _re_args("re_match", ctx, args, kwargs, span)
    try:
        return _re.match(pattern, text)
    except _re.error as exc:
        raise _fault(f"invalid pattern: {exc}", span) from None


def _fn_re_search(ctx, args, kwargs, span):
    pattern, text = _re_args("re_search", ctx, args, kwargs, span)
    try:
        return _re.search(pattern, text)
    except _re.error as exc:
        raise _fault(f"invalid pattern: {exc}", span) from None


def _fn_re_findall(ctx, args, kwargs, span):
    pattern, text = _re_args("re_findall", ctx, args, kwargs, span)
    try:
        out = _re.findall(pattern, text)
    except _re.error as exc:
        raise _fault(f"invalid pattern: {exc}", span) from None
    ctx.tick(span, len(out))
    return out


_DATE_FORMATS = ("%Y/%m/%d", "%d %b %Y", "%b %d, %Y", "%d.%m.%Y")
_DATETIME_FORMATS = ("%Y/%m/%d %H:%M:%S", "%d %b %Y %H:%M")


def _fn_parse_date(ctx, args, kwargs, span):
    _arity("parse_date", args, 1, 1, span)
    _only_kwargs("parse_date", kwargs, (), span)
    text = _need_str("parse_date", args[0], span).strip()
    try:
        return _dt.date.fromisoformat(text)
    except ValueError:
        pass
    for fmt in _DATE_FORMATS:
        try:
            return _dt.datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    raise _fault(f"cannot parse date {text!r}", span)


def _fn_parse_datetime(ctx, args, kwargs, span):
    _arity("parse_datetime", args, 1, 1, span)
    _only_kwargs("parse_datetime", kwargs, (), span)
    text = _need_str("parse_datetime", args[0], span).strip()
    try:
        return _dt.datetime.fromisoformat(text)
    except ValueError:
        pass
    for fmt in _DATETIME_FORMATS:
        try:
            return _dt.datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise _fault(f"cannot parse datetime {text!r}", span)


DEFAULT_WHITELIST: dict[str, HostFunction] = {
    fn.name: fn
    for fn in [
        HostFunction("len", _fn_len),
        HostFunction("any", _fn_any),
        HostFunction("all", _fn_all),
        HostFunction("min", _minmax("min", min)),
        HostFunction("max", _minmax("max", max)),
        HostFunction("sum", _fn_sum),
        HostFunction("sorted", _fn_sorted),
        HostFunction("set", _fn_set),
        HostFunction("zip", _fn_zip),
        HostFunction("enumerate", _fn_enumerate),
        HostFunction("range", _fn_range),
        HostFunction("abs", _fn_abs),
        HostFunction("round", _fn_round),
        HostFunction("next", _fn_next),
        HostFunction("reversed", _fn_reversed),
        HostFunction("filter", _fn_filter),
        HostFunction("map", _fn_map),
        HostFunction("re_match", _fn_re_match),
        HostFunction("re_search", _fn_re_search),
        HostFunction("re_findall", _fn_re_findall),
        HostFunction("parse_date", _fn_parse_date),
        HostFunction("parse_datetime", _fn_parse_datetime),
    ]
}


# ---------------------------------------------------------------------------
# Attribute mediation
# ---------------------------------------------------------------------------

_STR_METHODS = (
    "lower",
    "upper",
    "strip",
    "lstrip",
    "rstrip",
    "startswith",
    "endswith",
    "split",
    "rsplit",
    "splitlines",
    "replace",
    "find",
    "count",
    "isdigit",
    "isalpha",
    "isalnum",
    "title",
    "capitalize",
    "casefold",
    "join",
)

_MATCH_METHODS = ("group", "groups", "groupdict", "start", "end", "span")

_DATETIME_ATTRS = ("year", "month", "day", "hour", "minute", "second", "microsecond")
_DATETIME_METHODS = ("date", "time", "isoformat", "weekday")
_DATE_ATTRS = ("year", "month", "day")
_DATE_METHODS = ("isoformat", "weekday")
_TIME_ATTRS = ("hour", "minute", "second", "microsecond")
_TIME_METHODS = ("isoformat",)
_TIMEDELTA_ATTRS = ("days", "seconds", "microseconds")
_TIMEDELTA_METHODS = ("total_seconds",)


def _host_method(owner_type: str, name: str, func, span_hint: "Span | None" = None):
    def invoke(ctx, args, kwargs, span):
        if kwargs:
            raise _mismatch(f"{owner_type}.{name}() takes no keyword arguments", span)
        plain = []
        for a in args:
            if isinstance(a, GeneratorType):
                plain.append(list(a))  # generators self-charge while draining
            else:
                plain.append(a)
        ctx.tick(span)
        try:
            return func(*plain)
        except TypeError as exc:
            raise _mismatch(f"{owner_type}.{name}(): {exc}", span) from None
        except (ValueError, IndexError, KeyError) as exc:
            raise _fault(f"{owner_type}.{name}(): {exc}", span) from None

    return BoundMethod(f"{owner_type}.{name}", invoke)


def _unknown(obj, name, span, extra: str = "") -> DslError:
    hint = f" {extra}" if extra else ""
    return _err(
        DslErrorKind.UNKNOWN_ATTRIBUTE,
        f"{type_name(obj)} has no attribute {name!r}{hint}",
        span,
    )


def get_attribute(ctx, obj, name: str, span: Span):
    """Resolve obj.name against the per-type whitelist."""

    if name.startswith("_"):
        raise _unknown(obj, name, span, "(private names are hidden)")

    if isinstance(obj, SymbolInstance):
        if name in obj.values:
            return obj.values[name]
        fields = ", ".join(obj.values) or "none"
        raise _unknown(obj, name, span, f"(declared fields: {fields})")

    if isinstance(obj, Session):
        if name == "history":
            return obj.history
        if name == "state":
            if not obj.history:
                raise _fault("session has no states", span)
            return obj.state
        if name in ("find", "extract"):
            raise _err(
                DslErrorKind.FORBIDDEN_CALL,
                f"session.{name} does not exist; call {name} on a state "
                f"(session.state.{name} or session.history[i].{name})",
                span,
            )
        raise _unknown(obj, name, span)

    if isinstance(obj, State):
        ctx.touch_state(obj)
        if name == "page_id":
            return obj.page_id
        if name == "summary":
            return obj.summary
        if name == "url":
            return obj.url
        if name == "step_index":
            return obj.step_index
        if name == "elements":
            return obj.elements
        if name == "find":
            return _state_find_method(ctx, obj)
        if name == "extract":
            return _extract_method(ctx, obj, "state")
        raise _unknown(obj, name, span)

    if isinstance(obj, Element):
        if name in ("element_id", "id"):
            return obj.element_id
        if name in ("text", "role", "xmin", "ymin", "xmax", "ymax", "interactable"):
            return getattr(obj, name)
        if name == "attributes":
            return obj.attributes
        if name == "parent":
            return obj.parent
        if name == "children":
            return obj.children
        if name == "extract":
            return _extract_method(ctx, obj, "element")
        raise _unknown(obj, name, span)

    if isinstance(obj, str):
        if name in _STR_METHODS:
            return _host_method("str", name, getattr(obj, name))
        raise _unknown(obj, name, span)

    if isinstance(obj, dict):
        if name == "get":
            return _host_method("dict", "get", obj.get)
        if name == "keys":
            return _host_method("dict", "keys", lambda: list(obj.keys()))
        if name == "values":
            return _host_method("dict", "values", lambda: list(obj.values()))
        if name == "items":
            return _host_method("dict", "items", lambda: [(k, v) for k, v in obj.items()])
        raise _unknown(obj, name, span)

    if isinstance(obj, (list, tuple)):
        if name in ("count", "index"):
            return _host_method(type_name(obj), name, getattr(obj, name))
        raise _unknown(obj, name, span, "(lists are read-only here)")

    if isinstance(obj, _dt.datetime):
        if name in _DATETIME_ATTRS:
            return getattr(obj, name)
        if name in _DATETIME_METHODS:
            return _host_method("datetime", name, getattr(obj, name))
        raise _unknown(obj, name, span)

    if isinstance(obj, _dt.date):
        if name in _DATE_ATTRS:
            return getattr(obj, name)
        if name in _DATE_METHODS:
            return _host_method("date", name, getattr(obj, name))
        raise _unknown(obj, name, span)

    if isinstance(obj, _dt.time):
        if name in _TIME_ATTRS:
            return getattr(obj, name)
        if name in _TIME_METHODS:
            return _host_method("time", name, getattr(obj, name))
        raise _unknown(obj, name, span)

    if isinstance(obj, _dt.timedelta):
        if name in _TIMEDELTA_ATTRS:
            return getattr(obj, name)
        if name in _TIMEDELTA_METHODS:
            return _host_method("duration", name, getattr(obj, name))
        raise _unknown(obj, name, span)

    if isinstance(obj, _re.Match):
        if name in _MATCH_METHODS:
            return _host_method("match", name, getattr(obj, name))
        raise _unknown(obj, name, span)

    raise _unknown(obj, name, span)


def _state_find_method(ctx, state: State) -> BoundMethod:
    def invoke(inner_ctx, args, kwargs, span):
        _arity("find", args, 1, 2, span)
        _only_kwargs("find", kwargs, ("top_k",), span)
        description = _need_str("find", args[0], span, "description")
        top_k = kwargs.get("top_k", args[1] if len(args) == 2 else 5)
        top_k = _need_int("find", top_k, span, "top_k")
        if top_k < 1:
            raise _fault("find() top_k must be >= 1", span)
        inner_ctx.tick(span, max(1, len(state.elements)))
        return state.find(description, top_k)

    return BoundMethod("state.find", invoke)


def _extract_method(ctx, scope, owner: str) -> BoundMethod:
    def invoke(inner_ctx, args, kwargs, span):
        _arity("extract", args, 1, 2, span)
        _only_kwargs("extract", kwargs, ("schema",), span)
        instruction = _need_str("extract", args[0], span, "instruction")
        schema = kwargs.get("schema", args[1] if len(args) == 2 else None)
        if schema is None:
            raise _mismatch("extract() needs a schema argument", span)
        if isinstance(schema, str):
            try:
                decl = inner_ctx.env.schema_registry.resolve(schema)
            except SchemaRegistryError:
                raise _err(
                    DslErrorKind.UNKNOWN_NAME, f"unknown schema {schema!r}", span
                ) from None
        elif isinstance(schema, SchemaDecl):
            decl = schema
        else:
            raise _mismatch(
                f"extract() schema must be a schema, got {type_name(schema)}", span
            )
        if inner_ctx.env.extractor is None:
            raise _fault("no extractor is configured for extract()", span)
        inner_ctx.tick(span, 10)
        try:
            return inner_ctx.env.extractor(scope, instruction, decl)
        except DslError:
            raise
        except Exception as exc:  # gateway, script and validation failures
            raise _fault(f"extraction failed: {exc}", span) from None

    return BoundMethod(f"{owner}.extract", invoke)


__all__ = [
    "BoundMethod",
    "DEFAULT_WHITELIST",
    "HostFunction",
    "LambdaValue",
    "get_attribute",
    "type_name",
]
