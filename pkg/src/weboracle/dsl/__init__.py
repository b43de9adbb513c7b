"""Assertion language: parse, evaluate, classify.

Public surface:

    parse(source) -> AssertionProgram          (raises ProgramParseError)
    evaluate(program, env) -> Verdict
    evaluate_source(source, env) -> Verdict    (parse failures become verdicts)
    classify_failure(verdict) -> FailureFamily | None
"""

from .hostlib import DEFAULT_WHITELIST, HostFunction, type_name
from .interpreter import (
    DEFAULT_STEP_BUDGET,
    EvalEnvironment,
    evaluate,
    evaluate_source,
)
from .nodes import Span
from .parser import AssertionProgram, ProgramParseError, parse
from .verdicts import (
    DslError,
    DslErrorKind,
    FailureFamily,
    Verdict,
    VerdictStatus,
    classify_failure,
)

__all__ = [
    "AssertionProgram",
    "DEFAULT_STEP_BUDGET",
    "DEFAULT_WHITELIST",
    "DslError",
    "DslErrorKind",
    "EvalEnvironment",
    "FailureFamily",
    "HostFunction",
    "ProgramParseError",
    "Span",
    "Verdict",
    "VerdictStatus",
    "classify_failure",
    "evaluate",
    "evaluate_source",
    "parse",
    "type_name",
]
