"""AST for the assertion language.

The language is a small Python subset, but programs are never handed to
the host interpreter: they are parsed into these nodes and walked by our
own evaluator. Spans are kept for error reporting and excluded from
equality so structural comparison ignores formatting.

``to_python_ast`` maps a node back onto a host ast node, which gives a
canonical source form through ast.unparse without hand-writing a
precedence-aware printer.
"""

from __future__ import annotations

import ast as _pyast
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int
    end_col: int

    def describe(self) -> str:
        return f"line {self.line}, column {self.col + 1}"


NO_SPAN = Span(0, 0, 0, 0)


@dataclass
class Node:
    span: Span = field(default=NO_SPAN, kw_only=True, compare=False, repr=False)


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass
class Literal(Node):
    value: object  # int, float, str, bool or None


@dataclass
class Name(Node):
    id: str


@dataclass
class AttributeRef(Node):
    value: Node
    attr: str


@dataclass
class SliceRange(Node):
    lower: "Node | None"
    upper: "Node | None"
    step: "Node | None"


@dataclass
class Subscript(Node):
    value: Node
    index: Node  # plain expression or SliceRange


@dataclass
class Call(Node):
    func: Node
    args: list[Node]
    kwargs: list[tuple[str, Node]]


@dataclass
class UnaryOp(Node):
    op: str  # "not", "-", "+"
    operand: Node


@dataclass
class BinOp(Node):
    left: Node
    op: str  # + - * / // % ** | & ^
    right: Node


@dataclass
class BoolOp(Node):
    op: str  # "and" or "or"
    values: list[Node]


@dataclass
class Compare(Node):
    left: Node
    ops: list[str]  # == != < <= > >= in "not in" is "is not"
    comparators: list[Node]


@dataclass
class IfExpr(Node):
    test: Node
    body: Node
    orelse: Node


@dataclass
class LambdaDef(Node):
    params: list[str]
    body: Node


@dataclass
class ListDisplay(Node):
    items: list[Node]


@dataclass
class TupleDisplay(Node):
    items: list[Node]


@dataclass
class SetDisplay(Node):
    items: list[Node]


@dataclass
class DictDisplay(Node):
    pairs: list[tuple[Node, Node]]


@dataclass
class CompClause(Node):
    target: Node  # Name or nested Tuple/List display of names
    iterable: Node
    conditions: list[Node]


@dataclass
class Comp(Node):
    kind: str  # "list", "set" or "gen"
    element: Node
    clauses: list[CompClause]


@dataclass
class DictComp(Node):
    key: Node
    value: Node
    clauses: list[CompClause]


@dataclass
class FormatField(Node):
    value: Node
    conversion: "str | None" = None  # "r", "s" or "a"
    format_spec: "str | None" = None


@dataclass
class FStringExpr(Node):
    parts: list  # str or FormatField


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


@dataclass
class AssertStmt(Node):
    test: Node
    message: "Node | None" = None
    # canonical rendering of the test, used in default failure messages so
    # a program and its to_source() round-trip fail with identical text
    test_text: str = ""


@dataclass
class AssignStmt(Node):
    targets: list[Node]  # Name or Tuple/List display of targets
    value: Node


@dataclass
class AugAssignStmt(Node):
    target: Name
    op: str
    value: Node


@dataclass
class ExprStmt(Node):
    value: Node


@dataclass
class ForStmt(Node):
    target: Node
    iterable: Node
    body: list[Node]
    orelse: list[Node]


@dataclass
class WhileStmt(Node):
    test: Node
    body: list[Node]
    orelse: list[Node]


@dataclass
class IfStmt(Node):
    test: Node
    body: list[Node]
    orelse: list[Node]


@dataclass
class PassStmt(Node):
    pass


@dataclass
class BreakStmt(Node):
    pass


@dataclass
class ContinueStmt(Node):
    pass


# ---------------------------------------------------------------------------
# Canonical source via the host ast printer
# ---------------------------------------------------------------------------

_BIN = {
    "+": _pyast.Add,
    "-": _pyast.Sub,
    "*": _pyast.Mult,
    "/": _pyast.Div,
    "//": _pyast.FloorDiv,
    "%": _pyast.Mod,
    "**": _pyast.Pow,
    "|": _pyast.BitOr,
    "&": _pyast.BitAnd,
    "^": _pyast.BitXor,
}

_CMP = {
    "==": _pyast.Eq,
    "!=": _pyast.NotEq,
    "<": _pyast.Lt,
    "<=": _pyast.LtE,
    ">": _pyast.Gt,
    ">=": _pyast.GtE,
    "in": _pyast.In,
    "not in": _pyast.NotIn,
    "is": _pyast.Is,
    "is not": _pyast.IsNot,
}

_UNARY = {"not": _pyast.Not, "-": _pyast.USub, "+": _pyast.UAdd}


def _ctx(store: bool):
    return _pyast.Store() if store else _pyast.Load()


def to_python_ast(node: Node, store: bool = False):
    """Build an equivalent host ast node (for unparse only)."""

    if isinstance(node, Literal):
        return _pyast.Constant(value=node.value)
    if isinstance(node, Name):
        return _pyast.Name(id=node.id, ctx=_ctx(store))
    if isinstance(node, AttributeRef):
        return _pyast.Attribute(value=to_python_ast(node.value), attr=node.attr, ctx=_ctx(store))
    if isinstance(node, Subscript):
        return _pyast.Subscript(
            value=to_python_ast(node.value), slice=to_python_ast(node.index), ctx=_ctx(store)
        )
    if isinstance(node, SliceRange):
        return _pyast.Slice(
            lower=to_python_ast(node.lower) if node.lower else None,
            upper=to_python_ast(node.upper) if node.upper else None,
            step=to_python_ast(node.step) if node.step else None,
        )
    if isinstance(node, Call):
        return _pyast.Call(
            func=to_python_ast(node.func),
            args=[to_python_ast(a) for a in node.args],
            keywords=[_pyast.keyword(arg=k, value=to_python_ast(v)) for k, v in node.kwargs],
        )
    if isinstance(node, UnaryOp):
        return _pyast.UnaryOp(op=_UNARY[node.op](), operand=to_python_ast(node.operand))
    if isinstance(node, BinOp):
        return _pyast.BinOp(
            left=to_python_ast(node.left), op=_BIN[node.op](), right=to_python_ast(node.right)
        )
    if isinstance(node, BoolOp):
        op = _pyast.And() if node.op == "and" else _pyast.Or()
        return _pyast.BoolOp(op=op, values=[to_python_ast(v) for v in node.values])
    if isinstance(node, Compare):
        return _pyast.Compare(
            left=to_python_ast(node.left),
            ops=[_CMP[o]() for o in node.ops],
            comparators=[to_python_ast(c) for c in node.comparators],
        )
    if isinstance(node, IfExpr):
        return _pyast.IfExp(
            test=to_python_ast(node.test),
            body=to_python_ast(node.body),
            orelse=to_python_ast(node.orelse),
        )
    if isinstance(node, LambdaDef):
        args = _pyast.arguments(
            posonlyargs=[],
            args=[_pyast.arg(arg=p) for p in node.params],
            vararg=None,
            kwonlyargs=[],
            kw_defaults=[],
            kwarg=None,
            defaults=[],
        )
        return _pyast.Lambda(args=args, body=to_python_ast(node.body))
    if isinstance(node, ListDisplay):
        return _pyast.List(elts=[to_python_ast(i, store) for i in node.items], ctx=_ctx(store))
    if isinstance(node, TupleDisplay):
        return _pyast.Tuple(elts=[to_python_ast(i, store) for i in node.items], ctx=_ctx(store))
    if isinstance(node, SetDisplay):
        return _pyast.Set(elts=[to_python_ast(i) for i in node.items])
    if isinstance(node, DictDisplay):
        return _pyast.Dict(
            keys=[to_python_ast(k) for k, _ in node.pairs],
            values=[to_python_ast(v) for _, v in node.pairs],
        )
    if isinstance(node, (Comp, DictComp)):
        gens = [
            _pyast.comprehension(
                target=to_python_ast(cl.target, store=True),
                iter=to_python_ast(cl.iterable),
                ifs=[to_python_ast(c) for c in cl.conditions],
                is_async=0,
            )
            for cl in node.clauses
        ]
        if isinstance(node, DictComp):
            return _pyast.DictComp(
                key=to_python_ast(node.key), value=to_python_ast(node.value), generators=gens
            )
        elt = to_python_ast(node.element)
        if node.kind == "list":
            return _pyast.ListComp(elt=elt, generators=gens)
        if node.kind == "set":
            return _pyast.SetComp(elt=elt, generators=gens)
        return _pyast.GeneratorExp(elt=elt, generators=gens)
    if isinstance(node, FStringExpr):
        values = []
        for part in node.parts:
            if isinstance(part, str):
                values.append(_pyast.Constant(value=part))
            else:
                spec = None
                if part.format_spec is not None:
                    spec = _pyast.JoinedStr(values=[_pyast.Constant(value=part.format_spec)])
                conv = {"r": 114, "s": 115, "a": 97}.get(part.conversion or "", -1)
                values.append(
                    _pyast.FormattedValue(
                        value=to_python_ast(part.value), conversion=conv, format_spec=spec
                    )
                )
        return _pyast.JoinedStr(values=values)

    # statements
    if isinstance(node, AssertStmt):
        return _pyast.Assert(
            test=to_python_ast(node.test),
            msg=to_python_ast(node.message) if node.message else None,
        )
    if isinstance(node, AssignStmt):
        return _pyast.Assign(
            targets=[to_python_ast(t, store=True) for t in node.targets],
            value=to_python_ast(node.value),
        )
    if isinstance(node, AugAssignStmt):
        return _pyast.AugAssign(
            target=to_python_ast(node.target, store=True),
            op=_BIN[node.op](),
            value=to_python_ast(node.value),
        )
    if isinstance(node, ExprStmt):
        return _pyast.Expr(value=to_python_ast(node.value))
    if isinstance(node, ForStmt):
        return _pyast.For(
            target=to_python_ast(node.target, store=True),
            iter=to_python_ast(node.iterable),
            body=[to_python_ast(s) for s in node.body],
            orelse=[to_python_ast(s) for s in node.orelse],
        )
    if isinstance(node, WhileStmt):
        return _pyast.While(
            test=to_python_ast(node.test),
            body=[to_python_ast(s) for s in node.body],
            orelse=[to_python_ast(s) for s in node.orelse],
        )
    if isinstance(node, IfStmt):
        return _pyast.If(
            test=to_python_ast(node.test),
            body=[to_python_ast(s) for s in node.body],
            orelse=[to_python_ast(s) for s in node.orelse],
        )
    if isinstance(node, PassStmt):
        return _pyast.Pass()
    if isinstance(node, BreakStmt):
        return _pyast.Break()
    if isinstance(node, ContinueStmt):
        return _pyast.Continue()
    raise TypeError(f"no host mapping for {type(node).__name__}")


def unparse_program(body: list[Node]) -> str:
    module = _pyast.Module(body=[to_python_ast(stmt) for stmt in body], type_ignores=[])
    _pyast.fix_missing_locations(module)
    return _pyast.unparse(module)
