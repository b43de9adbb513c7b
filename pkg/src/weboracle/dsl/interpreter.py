"""Tree-walking evaluator for assertion programs.

The evaluator owns all semantics: name lookup, operators, iteration,
calls. No program text ever reaches the host compiler or eval machinery,
and every loop iteration, node visit and builtin scan is charged against
a step budget so evaluation always terminates.

Guarantees:
- total: any outcome is a pass, a fail, or an error with one of the
  seven error kinds; the evaluator itself never raises for program bugs
- read-only: environment bindings and trace objects are never mutated;
  program assignments live in a program-local scope
- deterministic: same program and environment give the same verdict,
  including message text (sets iterate in sorted order for this reason)
"""

from __future__ import annotations

from dataclasses import dataclass, field as dcfield
from types import GeneratorType
from typing import Callable, Mapping

import datetime as _dt

from ..schemas import SchemaDecl, SchemaRegistry, SymbolInstance
from ..trace import State
from . import nodes as n
from .hostlib import (
    DEFAULT_WHITELIST,
    BoundMethod,
    HostFunction,
    LambdaValue,
    get_attribute,
    type_name,
)
from .parser import AssertionProgram, ProgramParseError, parse
from .verdicts import DslError, DslErrorKind, Verdict, VerdictStatus

DEFAULT_STEP_BUDGET = 100_000

_SEQ_REPEAT_CAP = 1_000_000
_SEQ_CONCAT_CAP = 10_000_000
_INT_BITS_CAP = 1_000_000
_SENTINEL = object()


@dataclass
class EvalEnvironment:
    """Everything a program may see during evaluation.

    bindings must include 'session' and 'state'; the oracle engine adds
    schema declarations and any other names it wants visible. extractor,
    when set, serves state.extract()/element.extract() calls.
    """

    bindings: dict[str, object]
    schema_registry: SchemaRegistry = dcfield(default_factory=SchemaRegistry)
    function_whitelist: Mapping[str, HostFunction] = dcfield(
        default_factory=lambda: DEFAULT_WHITELIST
    )
    step_budget: int = DEFAULT_STEP_BUDGET
    extractor: "Callable | None" = None


class _AssertionFail(Exception):
    def __init__(self, message: str, span: n.Span):
        self.message = message
        self.span = span


class _Break(Exception):
    pass


class _Continue(Exception):
    pass


class _Scope:
    __slots__ = ("vars", "parent")

    def __init__(self, parent: "_Scope | None" = None):
        self.vars: dict[str, object] = {}
        self.parent = parent

    def get(self, name: str):
        scope: "_Scope | None" = self
        while scope is not None:
            if name in scope.vars:
                return scope.vars[name]
            scope = scope.parent
        return _SENTINEL

    def set(self, name: str, value) -> None:
        self.vars[name] = value


def evaluate(program: AssertionProgram, env: EvalEnvironment) -> Verdict:
    """Run a parsed program to a verdict. Never raises for program faults."""

    if "session" not in env.bindings or "state" not in env.bindings:
        raise ValueError("environment bindings must include 'session' and 'state'")
    return _Interp(program, env).run()


def evaluate_source(source: str, env: EvalEnvironment) -> Verdict:
    """Parse then evaluate; parse failures become parse_error verdicts."""

    try:
        program = parse(source)
    except ProgramParseError as exc:
        return Verdict(
            status=VerdictStatus.ERROR,
            message=str(exc),
            failing_span=exc.span,
            error_kind=DslErrorKind.PARSE_ERROR,
        )
    return evaluate(program, env)


class _Interp:
    def __init__(self, program: AssertionProgram, env: EvalEnvironment):
        self.program = program
        self.env = env
        self.budget = env.step_budget
        self.root = _Scope()
        self.touched: set[int] = set()
        self.source_lines = program.source.splitlines()

    # -- context surface used by hostlib ------------------------------------

    def tick(self, span: n.Span, cost: int = 1) -> None:
        self.budget -= cost
        if self.budget < 0:
            raise DslError(
                DslErrorKind.BUDGET_EXCEEDED,
                f"step budget exceeded ({self.env.step_budget})",
                span,
            )

    def touch_state(self, state: State) -> None:
        self.touched.add(state.step_index)

    def iterate(self, value, span: n.Span):
        """Charged iteration over any iterable value, with deterministic
        order for sets."""

        if isinstance(value, GeneratorType):
            return value  # our generators charge per item internally
        if isinstance(value, (list, tuple, str, range)):
            return self._charged(value, span)
        if isinstance(value, dict):
            return self._charged(list(value.keys()), span)
        if isinstance(value, (set, frozenset)):
            return self._charged(_ordered(value), span)
        raise DslError(
            DslErrorKind.TYPE_MISMATCH,
            f"value of type {type_name(value)} is not iterable",
            span,
        )

    def _charged(self, seq, span: n.Span):
        def gen():
            for item in seq:
                self.tick(span)
                yield item

        return gen()

    def call_value(self, func, args: list, span: n.Span, kwargs: "dict | None" = None):
        kwargs = kwargs or {}
        self.tick(span)
        if isinstance(func, HostFunction):
            return func.impl(self, args, kwargs, span)
        if isinstance(func, BoundMethod):
            return func.invoke(self, args, kwargs, span)
        if isinstance(func, LambdaValue):
            if kwargs:
                raise DslError(
                    DslErrorKind.TYPE_MISMATCH, "lambda takes no keyword arguments", span
                )
            if len(args) != len(func.params):
                raise DslError(
                    DslErrorKind.TYPE_MISMATCH,
                    f"lambda takes {len(func.params)} arguments, got {len(args)}",
                    span,
                )
            scope = _Scope(func.closure)
            for name, value in zip(func.params, args):
                scope.set(name, value)
            return self.eval(func.body, scope)
        raise DslError(
            DslErrorKind.FORBIDDEN_CALL,
            f"value of type {type_name(func)} is not callable",
            span,
        )

    # -- top level ----------------------------------------------------------

    def run(self) -> Verdict:
        try:
            self.exec_block(self.program.body, self.root)
        except _AssertionFail as failure:
            return Verdict(
                status=VerdictStatus.FAIL,
                message=failure.message,
                failing_span=failure.span,
                touched_states=tuple(sorted(self.touched)),
            )
        except DslError as exc:
            return Verdict(
                status=VerdictStatus.ERROR,
                message=exc.message,
                failing_span=exc.span,
                error_kind=exc.kind,
                touched_states=tuple(sorted(self.touched)),
            )
        except RecursionError:
            return Verdict(
                status=VerdictStatus.ERROR,
                message="evaluation recursion too deep",
                error_kind=DslErrorKind.RUNTIME_FAULT,
                touched_states=tuple(sorted(self.touched)),
            )
        except Exception as exc:  # noqa: BLE001 - totality over crashes
            return Verdict(
                status=VerdictStatus.ERROR,
                message=f"runtime fault ({type(exc).__name__}): {exc}",
                error_kind=DslErrorKind.RUNTIME_FAULT,
                touched_states=tuple(sorted(self.touched)),
            )
        return Verdict(
            status=VerdictStatus.PASS, touched_states=tuple(sorted(self.touched))
        )

    # -- statements ---------------------------------------------------------

    def exec_block(self, stmts, scope: _Scope) -> None:
        for stmt in stmts:
            self.exec_stmt(stmt, scope)

    def exec_stmt(self, stmt, scope: _Scope) -> None:
        self.tick(stmt.span)
        if isinstance(stmt, n.AssertStmt):
            value = self.eval(stmt.test, scope)
            if not value:
                if stmt.message is not None:
                    message = _to_text(self.eval(stmt.message, scope))
                else:
                    message = f"assertion failed: {stmt.test_text or self._segment(stmt.span)}"
                raise _AssertionFail(message, stmt.span)
            return
        if isinstance(stmt, n.AssignStmt):
            value = self.eval(stmt.value, scope)
            for target in stmt.targets:
                self._assign(target, value, scope)
            return
        if isinstance(stmt, n.AugAssignStmt):
            current = self._lookup(stmt.target.id, stmt.target.span, scope)
            value = self.eval(stmt.value, scope)
            scope.set(stmt.target.id, self._binop(stmt.op, current, value, stmt.span))
            return
        if isinstance(stmt, n.ExprStmt):
            self.eval(stmt.value, scope)
            return
        if isinstance(stmt, n.ForStmt):
            broke = False
            for item in self.iterate(self.eval(stmt.iterable, scope), stmt.span):
                self._assign(stmt.target, item, scope)
                try:
                    self.exec_block(stmt.body, scope)
                except _Break:
                    broke = True
                    break
                except _Continue:
                    continue
            if not broke:
                self.exec_block(stmt.orelse, scope)
            return
        if isinstance(stmt, n.WhileStmt):
            broke = False
            while True:
                self.tick(stmt.span)
                if not self.eval(stmt.test, scope):
                    break
                try:
                    self.exec_block(stmt.body, scope)
                except _Break:
                    broke = True
                    break
                except _Continue:
                    continue
            if not broke:
                self.exec_block(stmt.orelse, scope)
            return
        if isinstance(stmt, n.IfStmt):
            if self.eval(stmt.test, scope):
                self.exec_block(stmt.body, scope)
            else:
                self.exec_block(stmt.orelse, scope)
            return
        if isinstance(stmt, n.PassStmt):
            return
        if isinstance(stmt, n.BreakStmt):
            raise _Break()
        if isinstance(stmt, n.ContinueStmt):
            raise _Continue()
        raise DslError(
            DslErrorKind.RUNTIME_FAULT,
            f"unhandled statement {type(stmt).__name__}",
            stmt.span,
        )

    def _assign(self, target, value, scope: _Scope) -> None:
        if isinstance(target, n.Name):
            scope.set(target.id, value)
            return
        if isinstance(target, (n.TupleDisplay, n.ListDisplay)):
            items = list(self.iterate(value, target.span))
            if len(items) != len(target.items):
                raise DslError(
                    DslErrorKind.RUNTIME_FAULT,
                    f"cannot unpack {len(items)} values into {len(target.items)} names",
                    target.span,
                )
            for sub, item in zip(target.items, items):
                self._assign(sub, item, scope)
            return
        raise DslError(
            DslErrorKind.RUNTIME_FAULT,
            f"invalid assignment target {type(target).__name__}",
            target.span,
        )

    def _segment(self, span: n.Span) -> str:
        if 1 <= span.line <= len(self.source_lines):
            line = self.source_lines[span.line - 1]
            if span.end_line == span.line:
                return line[span.col : span.end_col].strip()
            return line[span.col :].strip()
        return "<assertion>"

    # -- expressions --------------------------------------------------------

    def eval(self, node, scope: _Scope):
        self.tick(node.span)
        handler = _EVAL.get(type(node))
        if handler is None:
            raise DslError(
                DslErrorKind.RUNTIME_FAULT,
                f"unhandled expression {type(node).__name__}",
                node.span,
            )
        return handler(self, node, scope)

    def _lookup(self, name: str, span: n.Span, scope: _Scope):
        value = scope.get(name)
        if value is not _SENTINEL:
            return value
        if name in self.env.bindings:
            return self.env.bindings[name]
        if name in self.env.schema_registry:
            return self.env.schema_registry.resolve(name)
        if name in self.env.function_whitelist:
            return self.env.function_whitelist[name]
        raise DslError(DslErrorKind.UNKNOWN_NAME, f"name {name!r} is not defined", span)

    # -- operators ----------------------------------------------------------

    def _binop(self, op: str, a, b, span: n.Span):
        if op == "+":
            return self._add(a, b, span)
        if op == "-":
            if _both_numbers(a, b):
                return a - b
            if isinstance(a, (set, frozenset)) and isinstance(b, (set, frozenset)):
                return a - b
            if isinstance(a, (_dt.date, _dt.datetime, _dt.timedelta)) or isinstance(
                b, (_dt.date, _dt.datetime, _dt.timedelta)
            ):
                return self._host_arith(op, a, b, span)
            raise _op_mismatch(op, a, b, span)
        if op == "*":
            if _both_numbers(a, b):
                if (
                    isinstance(a, int)
                    and isinstance(b, int)
                    and a.bit_length() + b.bit_length() > _INT_BITS_CAP
                ):
                    raise DslError(
                        DslErrorKind.BUDGET_EXCEEDED, "integer product too large", span
                    )
                return a * b
            for seq, count in ((a, b), (b, a)):
                if isinstance(seq, (str, list, tuple)) and _is_int(count):
                    if len(seq) * max(count, 0) > _SEQ_REPEAT_CAP:
                        raise DslError(
                            DslErrorKind.BUDGET_EXCEEDED,
                            "sequence repetition result too large",
                            span,
                        )
                    self.tick(span, len(seq) * max(count, 0))
                    return seq * count
            raise _op_mismatch(op, a, b, span)
        if op == "/":
            if _both_numbers(a, b):
                if b == 0:
                    raise DslError(DslErrorKind.RUNTIME_FAULT, "division by zero", span)
                return a / b
            raise _op_mismatch(op, a, b, span)
        if op in ("//", "%"):
            if _both_numbers(a, b):
                if b == 0:
                    raise DslError(DslErrorKind.RUNTIME_FAULT, "division by zero", span)
                return a // b if op == "//" else a % b
            if op == "%" and isinstance(a, str):
                raise DslError(
                    DslErrorKind.TYPE_MISMATCH,
                    "string formatting with % is not supported; use an f-string",
                    span,
                )
            raise _op_mismatch(op, a, b, span)
        if op == "**":
            if _both_numbers(a, b):
                if isinstance(a, int) and isinstance(b, int) and b >= 0:
                    if b * max(1, abs(a).bit_length()) > _INT_BITS_CAP:
                        raise DslError(
                            DslErrorKind.BUDGET_EXCEEDED, "exponent too large", span
                        )
                    return a**b
                try:
                    return a**b
                except (OverflowError, ZeroDivisionError) as exc:
                    raise DslError(
                        DslErrorKind.RUNTIME_FAULT, f"power failed: {exc}", span
                    ) from None
            raise _op_mismatch(op, a, b, span)
        if op in ("|", "&", "^"):
            if isinstance(a, (set, frozenset)) and isinstance(b, (set, frozenset)):
                return {"|": a | b, "&": a & b, "^": a ^ b}[op]
            if _is_int(a) and _is_int(b):
                return {"|": a | b, "&": a & b, "^": a ^ b}[op]
            raise _op_mismatch(op, a, b, span)
        raise DslError(DslErrorKind.RUNTIME_FAULT, f"unhandled operator {op!r}", span)

    def _add(self, a, b, span: n.Span):
        if _both_numbers(a, b):
            return a + b
        for kind in (str, list, tuple):
            if isinstance(a, kind) and isinstance(b, kind):
                if len(a) + len(b) > _SEQ_CONCAT_CAP:
                    raise DslError(
                        DslErrorKind.BUDGET_EXCEEDED, "concatenation result too large", span
                    )
                self.tick(span, (len(a) + len(b)) // 100 + 1)
                return a + b
        if isinstance(a, (_dt.date, _dt.datetime, _dt.timedelta)) or isinstance(
            b, (_dt.date, _dt.datetime, _dt.timedelta)
        ):
            return self._host_arith("+", a, b, span)
        raise _op_mismatch("+", a, b, span)

    def _host_arith(self, op: str, a, b, span: n.Span):
        try:
            if op == "+":
                return a + b
            return a - b
        except TypeError:
            raise _op_mismatch(op, a, b, span) from None
        except OverflowError as exc:
            raise DslError(DslErrorKind.RUNTIME_FAULT, f"overflow: {exc}", span) from None

    def _compare_pair(self, op: str, a, b, span: n.Span) -> bool:
        if op == "is":
            return a is b
        if op == "is not":
            return a is not b
        if op == "in":
            return self._contains(a, b, span)
        if op == "not in":
            return not self._contains(a, b, span)
        if op in ("==", "!="):
            if _num_str_clash(a, b):
                raise DslError(
                    DslErrorKind.TYPE_MISMATCH,
                    f"cannot compare {type_name(a)} with {type_name(b)} using {op!r}",
                    span,
                )
            result = a == b
            return result if op == "==" else not result
        try:
            if op == "<":
                return a < b
            if op == "<=":
                return a <= b
            if op == ">":
                return a > b
            if op == ">=":
                return a >= b
        except TypeError:
            raise DslError(
                DslErrorKind.TYPE_MISMATCH,
                f"{op!r} not supported between {type_name(a)} and {type_name(b)}",
                span,
            ) from None
        raise DslError(DslErrorKind.RUNTIME_FAULT, f"unhandled comparison {op!r}", span)

    def _contains(self, item, container, span: n.Span) -> bool:
        if isinstance(container, str):
            if not isinstance(item, str):
                raise DslError(
                    DslErrorKind.TYPE_MISMATCH,
                    f"'in <string>' needs a string, got {type_name(item)}",
                    span,
                )
            self.tick(span, len(container) // 100 + 1)
            return item in container
        if isinstance(container, (list, tuple, range)):
            self.tick(span, len(container))
            return item in container
        if isinstance(container, (set, frozenset, dict)):
            self.tick(span)
            try:
                return item in container
            except TypeError:
                raise DslError(
                    DslErrorKind.TYPE_MISMATCH,
                    f"unhashable {type_name(item)} in a hashed container",
                    span,
                ) from None
        if isinstance(container, GeneratorType):
            for candidate in container:
                if candidate == item:
                    return True
            return False
        raise DslError(
            DslErrorKind.TYPE_MISMATCH,
            f"'in' needs a container, got {type_name(container)}",
            span,
        )


# ---------------------------------------------------------------------------
# Expression handlers
# ---------------------------------------------------------------------------


def _eval_literal(interp, node: n.Literal, scope):
    return node.value


def _eval_name(interp, node: n.Name, scope):
    return interp._lookup(node.id, node.span, scope)


def _eval_attribute(interp, node: n.AttributeRef, scope):
    value = interp.eval(node.value, scope)
    return get_attribute(interp, value, node.attr, node.span)


def _eval_subscript(interp, node: n.Subscript, scope):
    value = interp.eval(node.value, scope)
    if isinstance(node.index, n.SliceRange):
        parts = []
        for piece in (node.index.lower, node.index.upper, node.index.step):
            if piece is None:
                parts.append(None)
            else:
                item = interp.eval(piece, scope)
                if not _is_int(item):
                    raise DslError(
                        DslErrorKind.TYPE_MISMATCH,
                        f"slice bounds must be integers, got {type_name(item)}",
                        node.span,
                    )
                parts.append(item)
        if not isinstance(value, (str, list, tuple, range)):
            raise DslError(
                DslErrorKind.TYPE_MISMATCH,
                f"value of type {type_name(value)} cannot be sliced",
                node.span,
            )
        try:
            return value[slice(*parts)]
        except ValueError as exc:
            raise DslError(DslErrorKind.RUNTIME_FAULT, str(exc), node.span) from None
    index = interp.eval(node.index, scope)
    if isinstance(value, (str, list, tuple, range)):
        if not _is_int(index):
            raise DslError(
                DslErrorKind.TYPE_MISMATCH,
                f"{type_name(value)} indices must be integers, got {type_name(index)}",
                node.span,
            )
        try:
            return value[index]
        except IndexError:
            raise DslError(
                DslErrorKind.RUNTIME_FAULT,
                f"index {index} out of range (length {len(value)})",
                node.span,
            ) from None
    if isinstance(value, dict):
        try:
            return value[index]
        except KeyError:
            raise DslError(
                DslErrorKind.RUNTIME_FAULT, f"key {index!r} not found", node.span
            ) from None
        except TypeError:
            raise DslError(
                DslErrorKind.TYPE_MISMATCH,
                f"unhashable key of type {type_name(index)}",
                node.span,
            ) from None
    if isinstance(value, SymbolInstance):
        raise DslError(
            DslErrorKind.TYPE_MISMATCH,
            "symbols use attribute access, not subscripts",
            node.span,
        )
    raise DslError(
        DslErrorKind.TYPE_MISMATCH,
        f"value of type {type_name(value)} is not subscriptable",
        node.span,
    )


def _eval_call(interp, node: n.Call, scope):
    func = interp.eval(node.func, scope)
    args = [interp.eval(a, scope) for a in node.args]
    kwargs = {key: interp.eval(value, scope) for key, value in node.kwargs}
    return interp.call_value(func, args, node.span, kwargs)


def _eval_unary(interp, node: n.UnaryOp, scope):
    value = interp.eval(node.operand, scope)
    if node.op == "not":
        return not value
    if not _is_number(value):
        raise DslError(
            DslErrorKind.TYPE_MISMATCH,
            f"unary {node.op!r} needs a number, got {type_name(value)}",
            node.span,
        )
    return -value if node.op == "-" else +value


def _eval_binop(interp, node: n.BinOp, scope):
    a = interp.eval(node.left, scope)
    b = interp.eval(node.right, scope)
    return interp._binop(node.op, a, b, node.span)


def _eval_boolop(interp, node: n.BoolOp, scope):
    result = None
    for sub in node.values:
        result = interp.eval(sub, scope)
        if node.op == "and" and not result:
            return result
        if node.op == "or" and result:
            return result
    return result


def _eval_compare(interp, node: n.Compare, scope):
    left = interp.eval(node.left, scope)
    for op, comp in zip(node.ops, node.comparators):
        right = interp.eval(comp, scope)
        if not interp._compare_pair(op, left, right, node.span):
            return False
        left = right
    return True


def _eval_ifexpr(interp, node: n.IfExpr, scope):
    if interp.eval(node.test, scope):
        return interp.eval(node.body, scope)
    return interp.eval(node.orelse, scope)


def _eval_lambda(interp, node: n.LambdaDef, scope):
    return LambdaValue(node.params, node.body, scope)


def _eval_list(interp, node: n.ListDisplay, scope):
    return [interp.eval(item, scope) for item in node.items]


def _eval_tuple(interp, node: n.TupleDisplay, scope):
    return tuple(interp.eval(item, scope) for item in node.items)


def _eval_setdisp(interp, node: n.SetDisplay, scope):
    out = set()
    for item in node.items:
        value = interp.eval(item, scope)
        try:
            out.add(value)
        except TypeError:
            raise DslError(
                DslErrorKind.TYPE_MISMATCH,
                f"unhashable {type_name(value)} in a set display",
                node.span,
            ) from None
    return out


def _eval_dictdisp(interp, node: n.DictDisplay, scope):
    out = {}
    for key_node, value_node in node.pairs:
        key = interp.eval(key_node, scope)
        value = interp.eval(value_node, scope)
        try:
            out[key] = value
        except TypeError:
            raise DslError(
                DslErrorKind.TYPE_MISMATCH,
                f"unhashable key of type {type_name(key)}",
                node.span,
            ) from None
    return out


def _comp_rows(interp, clauses: list[n.CompClause], scope, index: int = 0):
    """Yield once per combination of clause bindings, in a child scope."""

    if index == len(clauses):
        yield scope
        return
    clause = clauses[index]
    for item in interp.iterate(interp.eval(clause.iterable, scope), clause.span):
        inner = _Scope(scope)
        interp._assign(clause.target, item, inner)
        if all(interp.eval(cond, inner) for cond in clause.conditions):
            yield from _comp_rows(interp, clauses, inner, index + 1)


def _eval_comp(interp, node: n.Comp, scope):
    if node.kind == "gen":
        def gen():
            for row in _comp_rows(interp, node.clauses, scope):
                interp.tick(node.span)
                yield interp.eval(node.element, row)

        return gen()
    if node.kind == "list":
        return [interp.eval(node.element, row) for row in _comp_rows(interp, node.clauses, scope)]
    out = set()
    for row in _comp_rows(interp, node.clauses, scope):
        value = interp.eval(node.element, row)
        try:
            out.add(value)
        except TypeError:
            raise DslError(
                DslErrorKind.TYPE_MISMATCH,
                f"unhashable {type_name(value)} in a set comprehension",
                node.span,
            ) from None
    return out


def _eval_dictcomp(interp, node: n.DictComp, scope):
    out = {}
    for row in _comp_rows(interp, node.clauses, scope):
        key = interp.eval(node.key, row)
        try:
            out[key] = interp.eval(node.value, row)
        except TypeError:
            raise DslError(
                DslErrorKind.TYPE_MISMATCH,
                f"unhashable key of type {type_name(key)}",
                node.span,
            ) from None
    return out


def _eval_fstring(interp, node: n.FStringExpr, scope):
    pieces = []
    for part in node.parts:
        if isinstance(part, str):
            pieces.append(part)
            continue
        value = interp.eval(part.value, scope)
        if part.conversion == "r":
            value = repr(value)
        elif part.conversion == "s":
            value = str(value)
        elif part.conversion == "a":
            value = ascii(value)
        if part.format_spec:
            try:
                pieces.append(format(value, part.format_spec))
            except (ValueError, TypeError) as exc:
                raise DslError(
                    DslErrorKind.RUNTIME_FAULT,
                    f"bad format spec {part.format_spec!r}: {exc}",
                    node.span,
                ) from None
        else:
            pieces.append(value if isinstance(value, str) else _to_text(value))
    return "".join(pieces)


_EVAL = {
    n.Literal: _eval_literal,
    n.Name: _eval_name,
    n.AttributeRef: _eval_attribute,
    n.Subscript: _eval_subscript,
    n.Call: _eval_call,
    n.UnaryOp: _eval_unary,
    n.BinOp: _eval_binop,
    n.BoolOp: _eval_boolop,
    n.Compare: _eval_compare,
    n.IfExpr: _eval_ifexpr,
    n.LambdaDef: _eval_lambda,
    n.ListDisplay: _eval_list,
    n.TupleDisplay: _eval_tuple,
    n.SetDisplay: _eval_setdisp,
    n.DictDisplay: _eval_dictdisp,
    n.Comp: _eval_comp,
    n.DictComp: _eval_dictcomp,
    n.FStringExpr: _eval_fstring,
}


# ---------------------------------------------------------------------------
# Value helpers
# ---------------------------------------------------------------------------


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _both_numbers(a, b) -> bool:
    return isinstance(a, (int, float)) and isinstance(b, (int, float))


def _num_str_clash(a, b) -> bool:
    a_num = isinstance(a, (int, float)) and not isinstance(a, bool)
    b_num = isinstance(b, (int, float)) and not isinstance(b, bool)
    return (a_num and isinstance(b, str)) or (isinstance(a, str) and b_num)


def _op_mismatch(op: str, a, b, span: n.Span) -> DslError:
    return DslError(
        DslErrorKind.TYPE_MISMATCH,
        f"operator {op!r} not supported between {type_name(a)} and {type_name(b)}",
        span,
    )


def _ordered(values):
    """Sets iterate in sorted order so verdicts never depend on hashing."""

    try:
        return sorted(values)
    except TypeError:
        return sorted(values, key=repr)


def _to_text(value) -> str:
    return str(value)
