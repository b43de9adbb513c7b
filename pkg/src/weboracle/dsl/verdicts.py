"""Verdicts and error taxonomy for assertion evaluation.

Every evaluation ends in exactly one of three statuses. Errors carry one
of seven kinds; classify_failure folds a failed or errored verdict into
the coarser failure family used in run reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .nodes import Span


class VerdictStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    ERROR = "error"


class DslErrorKind(str, Enum):
    PARSE_ERROR = "parse_error"
    UNKNOWN_NAME = "unknown_name"
    UNKNOWN_ATTRIBUTE = "unknown_attribute"
    FORBIDDEN_CALL = "forbidden_call"
    TYPE_MISMATCH = "type_mismatch"
    RUNTIME_FAULT = "runtime_fault"
    BUDGET_EXCEEDED = "budget_exceeded"


class FailureFamily(str, Enum):
    SYMBOL_MISUSE = "symbol_misuse"
    DSL_MISUSE = "dsl_misuse"
    RUNTIME_FAULT = "runtime_fault"
    ASSERTION_FAIL = "assertion_fail"


@dataclass
class Verdict:
    status: VerdictStatus
    message: str = ""
    failing_span: "Span | None" = None
    error_kind: "DslErrorKind | None" = None
    touched_states: tuple[int, ...] = ()

    @property
    def passed(self) -> bool:
        return self.status is VerdictStatus.PASS

    def to_dict(self) -> dict:
        out: dict = {"status": self.status.value, "message": self.message}
        if self.failing_span is not None:
            out["span"] = [
                self.failing_span.line,
                self.failing_span.col,
                self.failing_span.end_line,
                self.failing_span.end_col,
            ]
        if self.error_kind is not None:
            out["error_kind"] = self.error_kind.value
        return out


class DslError(Exception):
    """Internal control-flow exception; surfaces as an error verdict."""

    def __init__(self, kind: DslErrorKind, message: str, span: "Span | None" = None):
        self.kind = kind
        self.message = message
        self.span = span
        super().__init__(message)


_FAMILY_BY_KIND = {
    DslErrorKind.PARSE_ERROR: FailureFamily.DSL_MISUSE,
    DslErrorKind.UNKNOWN_NAME: FailureFamily.SYMBOL_MISUSE,
    DslErrorKind.UNKNOWN_ATTRIBUTE: FailureFamily.DSL_MISUSE,
    DslErrorKind.FORBIDDEN_CALL: FailureFamily.DSL_MISUSE,
    DslErrorKind.TYPE_MISMATCH: FailureFamily.RUNTIME_FAULT,
    DslErrorKind.RUNTIME_FAULT: FailureFamily.RUNTIME_FAULT,
    DslErrorKind.BUDGET_EXCEEDED: FailureFamily.RUNTIME_FAULT,
}


def classify_failure(verdict: Verdict) -> "FailureFamily | None":
    """Map a non-passing verdict to its failure family; None for a pass.

    Name lookups that miss point at a bad symbolization; attribute,
    call and parse violations point at misuse of the language itself;
    everything else that errors is a runtime fault.
    """

    if verdict.status is VerdictStatus.PASS:
        return None
    if verdict.status is VerdictStatus.FAIL:
        return FailureFamily.ASSERTION_FAIL
    if verdict.error_kind is None:
        return FailureFamily.RUNTIME_FAULT
    return _FAMILY_BY_KIND[verdict.error_kind]
