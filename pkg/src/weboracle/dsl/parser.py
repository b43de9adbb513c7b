"""Parsing for the assertion language.

The grammar is a strict Python subset, so the host ast module serves as
the parsing frontend. Conversion into our own node types is a whitelist:
any construct without a mapping here (imports, definitions, with/try,
walrus, starred arguments, dunder attributes, ...) is rejected with a
parse error naming the construct and its location. Evaluation never
touches the host compiler or eval machinery.
"""

from __future__ import annotations

import ast as _pyast
from dataclasses import dataclass

from ..errors import WeboracleError
from . import nodes as n

MAX_PROGRAM_CHARS = 100_000


class ProgramParseError(WeboracleError):
    """Source text is outside the language. Carries a span when known."""

    def __init__(self, message: str, span: "n.Span | None" = None):
        self.span = span
        where = f" ({span.describe()})" if span else ""
        super().__init__(f"{message}{where}")


@dataclass
class AssertionProgram:
    """A parsed program plus the static facts the engine checks.

    referenced_names are free identifiers (reads not bound by any
    assignment, loop target, comprehension target or lambda parameter).
    referenced_schemas are names appearing in schema position of an
    extract(...) call.
    """

    source: str
    body: list[n.Node]
    referenced_names: frozenset[str]
    referenced_schemas: frozenset[str]

    def to_source(self) -> str:
        return n.unparse_program(self.body)

    def has_assertion(self) -> bool:
        return any(_contains_assert(stmt) for stmt in self.body)


def _contains_assert(stmt: n.Node) -> bool:
    if isinstance(stmt, n.AssertStmt):
        return True
    if isinstance(stmt, (n.ForStmt, n.WhileStmt, n.IfStmt)):
        return any(_contains_assert(s) for s in stmt.body + stmt.orelse)
    return False


def parse(source: str) -> AssertionProgram:
    if not isinstance(source, str):
        raise ProgramParseError("program source must be a string")
    if len(source) > MAX_PROGRAM_CHARS:
        raise ProgramParseError(
            f"program longer than {MAX_PROGRAM_CHARS} characters"
        )
    try:
        module = _pyast.parse(source)
    except SyntaxError as exc:
        span = n.Span(exc.lineno or 1, (exc.offset or 1) - 1, exc.lineno or 1, exc.offset or 1)
        raise ProgramParseError(f"syntax error: {exc.msg}", span) from None
    except (RecursionError, MemoryError, ValueError) as exc:
        raise ProgramParseError(f"program too complex to parse: {exc}") from None
    try:
        body = [_stmt(s) for s in module.body]
    except RecursionError:
        raise ProgramParseError("program nesting too deep") from None
    names, schemas = _analyze(body)
    return AssertionProgram(
        source=source,
        body=body,
        referenced_names=frozenset(names),
        referenced_schemas=frozenset(schemas),
    )


def _span(node) -> n.Span:
    return n.Span(
        getattr(node, "lineno", 0),
        getattr(node, "col_offset", 0),
        getattr(node, "end_lineno", getattr(node, "lineno", 0)),
        getattr(node, "end_col_offset", getattr(node, "col_offset", 0)),
    )


def _reject(node, what: str):
    raise ProgramParseError(f"{what} is not part of this language", _span(node))


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


def _stmt(node) -> n.Node:
    sp = _span(node)
    if isinstance(node, _pyast.Assert):
        return n.AssertStmt(
            test=_expr(node.test),
            message=_expr(node.msg) if node.msg is not None else None,
            test_text=_pyast.unparse(node.test),
            span=sp,
        )
    if isinstance(node, _pyast.Assign):
        return n.AssignStmt(
            targets=[_target(t) for t in node.targets], value=_expr(node.value), span=sp
        )
    if isinstance(node, _pyast.AugAssign):
        if not isinstance(node.target, _pyast.Name):
            _reject(node, "augmented assignment to a non-name")
        if type(node.op) not in _BIN_OPS:
            _reject(node, f"operator {type(node.op).__name__}")
        return n.AugAssignStmt(
            target=n.Name(node.target.id, span=_span(node.target)),
            op=_BIN_OPS[type(node.op)],
            value=_expr(node.value),
            span=sp,
        )
    if isinstance(node, _pyast.Expr):
        return n.ExprStmt(value=_expr(node.value), span=sp)
    if isinstance(node, _pyast.For):
        return n.ForStmt(
            target=_target(node.target),
            iterable=_expr(node.iter),
            body=[_stmt(s) for s in node.body],
            orelse=[_stmt(s) for s in node.orelse],
            span=sp,
        )
    if isinstance(node, _pyast.While):
        return n.WhileStmt(
            test=_expr(node.test),
            body=[_stmt(s) for s in node.body],
            orelse=[_stmt(s) for s in node.orelse],
            span=sp,
        )
    if isinstance(node, _pyast.If):
        return n.IfStmt(
            test=_expr(node.test),
            body=[_stmt(s) for s in node.body],
            orelse=[_stmt(s) for s in node.orelse],
            span=sp,
        )
    if isinstance(node, _pyast.Pass):
        return n.PassStmt(span=sp)
    if isinstance(node, _pyast.Break):
        return n.BreakStmt(span=sp)
    if isinstance(node, _pyast.Continue):
        return n.ContinueStmt(span=sp)
    if isinstance(node, (_pyast.Import, _pyast.ImportFrom)):
        _reject(node, "import")
    if isinstance(node, (_pyast.FunctionDef, _pyast.AsyncFunctionDef)):
        _reject(node, "function definition")
    if isinstance(node, _pyast.ClassDef):
        _reject(node, "class definition")
    _reject(node, f"statement {type(node).__name__}")


def _target(node) -> n.Node:
    if isinstance(node, _pyast.Name):
        _check_name(node.id, node)
        return n.Name(node.id, span=_span(node))
    if isinstance(node, _pyast.Tuple):
        return n.TupleDisplay([_target(e) for e in node.elts], span=_span(node))
    if isinstance(node, _pyast.List):
        return n.ListDisplay([_target(e) for e in node.elts], span=_span(node))
    if isinstance(node, (_pyast.Attribute, _pyast.Subscript)):
        _reject(node, "assignment to an attribute or subscript")
    if isinstance(node, _pyast.Starred):
        _reject(node, "starred assignment")
    _reject(node, f"assignment target {type(node).__name__}")


def _check_name(name: str, node) -> None:
    if name.startswith("__"):
        raise ProgramParseError(
            f"name {name!r} is reserved (double underscore prefix)", _span(node)
        )


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

_BIN_OPS = {
    _pyast.Add: "+",
    _pyast.Sub: "-",
    _pyast.Mult: "*",
    _pyast.Div: "/",
    _pyast.FloorDiv: "//",
    _pyast.Mod: "%",
    _pyast.Pow: "**",
    _pyast.BitOr: "|",
    _pyast.BitAnd: "&",
    _pyast.BitXor: "^",
}

_CMP_OPS = {
    _pyast.Eq: "==",
    _pyast.NotEq: "!=",
    _pyast.Lt: "<",
    _pyast.LtE: "<=",
    _pyast.Gt: ">",
    _pyast.GtE: ">=",
    _pyast.In: "in",
    _pyast.NotIn: "not in",
    _pyast.Is: "is",
    _pyast.IsNot: "is not",
}

_UNARY_OPS = {_pyast.Not: "not", _pyast.USub: "-", _pyast.UAdd: "+"}


def _expr(node) -> n.Node:
    sp = _span(node)
    if isinstance(node, _pyast.Constant):
        if node.value is None or isinstance(node.value, (bool, int, float, str)):
            return n.Literal(node.value, span=sp)
        _reject(node, f"literal of type {type(node.value).__name__}")
    if isinstance(node, _pyast.Name):
        _check_name(node.id, node)
        return n.Name(node.id, span=sp)
    if isinstance(node, _pyast.Attribute):
        if node.attr.startswith("__"):
            _reject(node, f"attribute {node.attr!r} (double underscore prefix)")
        return n.AttributeRef(value=_expr(node.value), attr=node.attr, span=sp)
    if isinstance(node, _pyast.Subscript):
        return n.Subscript(value=_expr(node.value), index=_index(node.slice), span=sp)
    if isinstance(node, _pyast.Call):
        args = []
        for arg in node.args:
            if isinstance(arg, _pyast.Starred):
                _reject(arg, "starred call argument")
            args.append(_expr(arg))
        kwargs = []
        for kw in node.keywords:
            if kw.arg is None:
                _reject(node, "keyword argument unpacking")
            kwargs.append((kw.arg, _expr(kw.value)))
        return n.Call(func=_expr(node.func), args=args, kwargs=kwargs, span=sp)
    if isinstance(node, _pyast.UnaryOp):
        if type(node.op) not in _UNARY_OPS:
            _reject(node, f"operator {type(node.op).__name__}")
        return n.UnaryOp(op=_UNARY_OPS[type(node.op)], operand=_expr(node.operand), span=sp)
    if isinstance(node, _pyast.BinOp):
        if type(node.op) not in _BIN_OPS:
            _reject(node, f"operator {type(node.op).__name__}")
        return n.BinOp(
            left=_expr(node.left), op=_BIN_OPS[type(node.op)], right=_expr(node.right), span=sp
        )
    if isinstance(node, _pyast.BoolOp):
        op = "and" if isinstance(node.op, _pyast.And) else "or"
        return n.BoolOp(op=op, values=[_expr(v) for v in node.values], span=sp)
    if isinstance(node, _pyast.Compare):
        ops = []
        for op in node.ops:
            if type(op) not in _CMP_OPS:
                _reject(node, f"comparison {type(op).__name__}")
            ops.append(_CMP_OPS[type(op)])
        return n.Compare(
            left=_expr(node.left),
            ops=ops,
            comparators=[_expr(c) for c in node.comparators],
            span=sp,
        )
    if isinstance(node, _pyast.IfExp):
        return n.IfExpr(
            test=_expr(node.test), body=_expr(node.body), orelse=_expr(node.orelse), span=sp
        )
    if isinstance(node, _pyast.Lambda):
        a = node.args
        if a.posonlyargs or a.vararg or a.kwonlyargs or a.kwarg or a.defaults or a.kw_defaults:
            _reject(node, "lambda with non-positional or defaulted parameters")
        params = []
        for p in a.args:
            _check_name(p.arg, node)
            params.append(p.arg)
        return n.LambdaDef(params=params, body=_expr(node.body), span=sp)
    if isinstance(node, _pyast.List):
        return n.ListDisplay([_expr(e) for e in _no_starred(node.elts)], span=sp)
    if isinstance(node, _pyast.Tuple):
        return n.TupleDisplay([_expr(e) for e in _no_starred(node.elts)], span=sp)
    if isinstance(node, _pyast.Set):
        return n.SetDisplay([_expr(e) for e in _no_starred(node.elts)], span=sp)
    if isinstance(node, _pyast.Dict):
        pairs = []
        for key, value in zip(node.keys, node.values):
            if key is None:
                _reject(node, "dict unpacking")
            pairs.append((_expr(key), _expr(value)))
        return n.DictDisplay(pairs, span=sp)
    if isinstance(node, (_pyast.ListComp, _pyast.SetComp, _pyast.GeneratorExp)):
        kind = {"ListComp": "list", "SetComp": "set", "GeneratorExp": "gen"}[
            type(node).__name__
        ]
        return n.Comp(
            kind=kind,
            element=_expr(node.elt),
            clauses=[_clause(g) for g in node.generators],
            span=sp,
        )
    if isinstance(node, _pyast.DictComp):
        return n.DictComp(
            key=_expr(node.key),
            value=_expr(node.value),
            clauses=[_clause(g) for g in node.generators],
            span=sp,
        )
    if isinstance(node, _pyast.JoinedStr):
        return _fstring(node)
    if isinstance(node, _pyast.NamedExpr):
        _reject(node, "assignment expression (walrus)")
    if isinstance(node, _pyast.Starred):
        _reject(node, "starred expression")
    if isinstance(node, (_pyast.Await, _pyast.Yield, _pyast.YieldFrom)):
        _reject(node, "coroutine or generator statement")
    _reject(node, f"expression {type(node).__name__}")


def _no_starred(elts):
    for e in elts:
        if isinstance(e, _pyast.Starred):
            _reject(e, "starred expression")
    return elts


def _index(node) -> n.Node:
    if isinstance(node, _pyast.Slice):
        return n.SliceRange(
            lower=_expr(node.lower) if node.lower else None,
            upper=_expr(node.upper) if node.upper else None,
            step=_expr(node.step) if node.step else None,
            span=_span(node),
        )
    return _expr(node)


def _clause(gen) -> n.CompClause:
    if gen.is_async:
        raise ProgramParseError("async comprehension is not part of this language")
    return n.CompClause(
        target=_target(gen.target),
        iterable=_expr(gen.iter),
        conditions=[_expr(c) for c in gen.ifs],
        span=_span(gen.target),
    )


def _fstring(node: _pyast.JoinedStr) -> n.FStringExpr:
    parts: list = []
    for value in node.values:
        if isinstance(value, _pyast.Constant):
            parts.append(str(value.value))
        elif isinstance(value, _pyast.FormattedValue):
            spec = None
            if value.format_spec is not None:
                spec_parts = []
                for sub in value.format_spec.values:
                    if not isinstance(sub, _pyast.Constant):
                        _reject(value, "expression inside a format spec")
                    spec_parts.append(str(sub.value))
                spec = "".join(spec_parts)
            conv = {114: "r", 115: "s", 97: "a"}.get(value.conversion)
            parts.append(
                n.FormatField(
                    value=_expr(value.value),
                    conversion=conv,
                    format_spec=spec,
                    span=_span(value),
                )
            )
        else:
            _reject(node, "f-string component")
    return n.FStringExpr(parts, span=_span(node))


# ---------------------------------------------------------------------------
# Static analysis
# ---------------------------------------------------------------------------


def _analyze(body: list[n.Node]) -> tuple[set[str], set[str]]:
    assigned: set[str] = set()
    loads: set[str] = set()
    schemas: set[str] = set()

    def bind_target(target: n.Node, bound: set[str]) -> None:
        if isinstance(target, n.Name):
            bound.add(target.id)
        elif isinstance(target, (n.TupleDisplay, n.ListDisplay)):
            for item in target.items:
                bind_target(item, bound)

    def walk_expr(expr: n.Node, local: set[str]) -> None:
        if isinstance(expr, n.Name):
            if expr.id not in local:
                loads.add(expr.id)
        elif isinstance(expr, n.AttributeRef):
            walk_expr(expr.value, local)
        elif isinstance(expr, n.Subscript):
            walk_expr(expr.value, local)
            walk_expr(expr.index, local)
        elif isinstance(expr, n.SliceRange):
            for part in (expr.lower, expr.upper, expr.step):
                if part is not None:
                    walk_expr(part, local)
        elif isinstance(expr, n.Call):
            _note_schema_arg(expr, schemas)
            walk_expr(expr.func, local)
            for a in expr.args:
                walk_expr(a, local)
            for _, v in expr.kwargs:
                walk_expr(v, local)
        elif isinstance(expr, n.UnaryOp):
            walk_expr(expr.operand, local)
        elif isinstance(expr, n.BinOp):
            walk_expr(expr.left, local)
            walk_expr(expr.right, local)
        elif isinstance(expr, n.BoolOp):
            for v in expr.values:
                walk_expr(v, local)
        elif isinstance(expr, n.Compare):
            walk_expr(expr.left, local)
            for c in expr.comparators:
                walk_expr(c, local)
        elif isinstance(expr, n.IfExpr):
            walk_expr(expr.test, local)
            walk_expr(expr.body, local)
            walk_expr(expr.orelse, local)
        elif isinstance(expr, n.LambdaDef):
            walk_expr(expr.body, local | set(expr.params))
        elif isinstance(expr, (n.ListDisplay, n.TupleDisplay, n.SetDisplay)):
            for item in expr.items:
                walk_expr(item, local)
        elif isinstance(expr, n.DictDisplay):
            for k, v in expr.pairs:
                walk_expr(k, local)
                walk_expr(v, local)
        elif isinstance(expr, (n.Comp, n.DictComp)):
            inner = set(local)
            for cl in expr.clauses:
                walk_expr(cl.iterable, inner)
                bind_target(cl.target, inner)
                for cond in cl.conditions:
                    walk_expr(cond, inner)
            if isinstance(expr, n.DictComp):
                walk_expr(expr.key, inner)
                walk_expr(expr.value, inner)
            else:
                walk_expr(expr.element, inner)
        elif isinstance(expr, n.FStringExpr):
            for part in expr.parts:
                if isinstance(part, n.FormatField):
                    walk_expr(part.value, local)

    def walk_stmt(stmt: n.Node) -> None:
        if isinstance(stmt, n.AssertStmt):
            walk_expr(stmt.test, assigned)
            if stmt.message is not None:
                walk_expr(stmt.message, assigned)
        elif isinstance(stmt, n.AssignStmt):
            walk_expr(stmt.value, assigned)
            for t in stmt.targets:
                bind_target(t, assigned)
        elif isinstance(stmt, n.AugAssignStmt):
            walk_expr(stmt.value, assigned)
            if stmt.target.id not in assigned:
                loads.add(stmt.target.id)
            assigned.add(stmt.target.id)
        elif isinstance(stmt, n.ExprStmt):
            walk_expr(stmt.value, assigned)
        elif isinstance(stmt, n.ForStmt):
            walk_expr(stmt.iterable, assigned)
            bind_target(stmt.target, assigned)
            for s in stmt.body + stmt.orelse:
                walk_stmt(s)
        elif isinstance(stmt, (n.WhileStmt, n.IfStmt)):
            walk_expr(stmt.test, assigned)
            for s in stmt.body + stmt.orelse:
                walk_stmt(s)

    for stmt in body:
        walk_stmt(stmt)
    return loads, schemas


def _note_schema_arg(call: n.Call, schemas: set[str]) -> None:
    """Record the schema referenced by an extract(...) call, if static."""

    if not (isinstance(call.func, n.AttributeRef) and call.func.attr == "extract"):
        return
    schema_arg: "n.Node | None" = None
    if len(call.args) >= 2:
        schema_arg = call.args[1]
    for key, value in call.kwargs:
        if key == "schema":
            schema_arg = value
    if isinstance(schema_arg, n.Name):
        schemas.add(schema_arg.id)
    elif isinstance(schema_arg, n.Literal) and isinstance(schema_arg.value, str):
        schemas.add(schema_arg.value)
