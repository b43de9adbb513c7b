"""Oracle inference and test execution.

For each requirement step the engine asks the gateway, in two stages, for
a formal check: stage one collects dependency notes across steps (what
later steps rely on from earlier ones), stage two turns one step plus the
current page into schema declarations and a pair of assertion programs
(precondition over the state before the action, postcondition over the
state after). Responses are statically checked; a single repair prompt is
allowed before inference gives up.

Execution then walks the steps: check precondition, perform the action,
check postcondition, with verdict voting and a shared retry budget per
step. The first flagged step stops the run and becomes a bug report.
Everything observed lands in a RunRecord that serializes byte-stably so
replays can be compared with a plain file diff.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field

from .actions import (
    ActionCompileError,
    ActionExecutor,
    ActionFailed,
    Driver,
    GroundingError,
    apply_action,
)
from .dsl import (
    AssertionProgram,
    DEFAULT_STEP_BUDGET,
    DEFAULT_WHITELIST,
    EvalEnvironment,
    ProgramParseError,
    Verdict,
    VerdictStatus,
    evaluate,
    parse,
)
from .errors import ReplayDivergence, WeboracleError
from .gateway import Prompt, PromptRole
from .requirements import Requirement, TestStep, parse_requirement
from .schemas import (
    SchemaDecl,
    SchemaParseError,
    SchemaRegistry,
    SchemaRegistryError,
    parse_schema_text,
    validate,
)
from .trace import (
    Element,
    ExtractionError,
    PageReidentifier,
    Session,
    State,
    append_state,
    extract as gateway_extract,
    trace_to_dict,
)

RESERVED_NAMES = ("session", "state")


class OracleInferenceError(WeboracleError):
    """The gateway could not produce a usable assertion bundle."""


class VoteError(WeboracleError):
    pass


# ---------------------------------------------------------------------------
# Voting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VotePolicy:
    """How m samples of the same check combine into one resolution.

    single: one sample, its status decides. majority: pass wins iff more
    than half the samples pass. threshold: pass wins iff the pass share
    strictly exceeds t. Samples that error count against passing; when
    nothing passes and every non-pass is an error the resolution is
    "error" rather than "fail".
    """

    kind: str = "single"
    samples: int = 1
    threshold: float = 0.5

    def __post_init__(self):
        if self.kind not in ("single", "majority", "threshold"):
            raise VoteError(f"unknown vote kind {self.kind!r}")
        if self.kind == "single" and self.samples != 1:
            raise VoteError("single voting uses exactly one sample")
        if self.kind != "single" and self.samples < 1:
            raise VoteError(f"{self.kind} voting needs at least 1 sample")
        if self.kind == "threshold" and not (0.0 <= self.threshold < 1.0):
            raise VoteError("threshold must be in [0, 1)")

    def resolve(self, verdicts: "list[Verdict]") -> str:
        if len(verdicts) != self.samples:
            raise VoteError(
                f"expected {self.samples} verdicts, got {len(verdicts)}"
            )
        passes = sum(1 for v in verdicts if v.status is VerdictStatus.PASS)
        if self.kind == "majority":
            passed = passes > self.samples / 2
        elif self.kind == "threshold":
            passed = passes / self.samples > self.threshold
        else:
            passed = passes == 1
        if passed:
            return "pass"
        if any(v.status is VerdictStatus.FAIL for v in verdicts):
            return "fail"
        if any(v.status is VerdictStatus.ERROR for v in verdicts):
            return "error"
        return "fail"

    def spec(self) -> str:
        if self.kind == "single":
            return "single"
        if self.kind == "majority":
            return f"majority:{self.samples}"
        return f"threshold:{self.samples}:{self.threshold}"


def parse_vote_spec(text: str) -> VotePolicy:
    parts = text.strip().split(":")
    kind = parts[0]
    try:
        if kind == "single":
            if len(parts) != 1:
                raise ValueError
            return VotePolicy("single")
        if kind == "majority":
            if len(parts) != 2:
                raise ValueError
            return VotePolicy("majority", samples=int(parts[1]))
        if kind == "threshold":
            if len(parts) != 3:
                raise ValueError
            return VotePolicy("threshold", samples=int(parts[1]), threshold=float(parts[2]))
    except ValueError:
        pass
    raise VoteError(
        f"bad vote spec {text!r}; use single, majority:M or threshold:M:T"
    )


def resolve_vote(verdicts: "list[Verdict]", policy: VotePolicy) -> str:
    """Combine verdicts under a policy: "pass", "fail" or "error"."""

    return policy.resolve(verdicts)


def representative(verdicts: "list[Verdict]", resolution: str) -> Verdict:
    """The verdict shown in reports for a resolved vote."""

    wanted = {
        "pass": VerdictStatus.PASS,
        "fail": VerdictStatus.FAIL,
        "error": VerdictStatus.ERROR,
    }[resolution]
    for v in verdicts:
        if v.status is wanted:
            return v
    return verdicts[0]


# ---------------------------------------------------------------------------
# Stage one: dependency notes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DependencyNote:
    kind: str  # causal | temporal | data
    steps: "tuple[int, ...]"
    note: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "steps": list(self.steps), "note": self.note}

    def render(self) -> str:
        chain = "->".join(str(s) for s in self.steps)
        return f"{self.kind} {chain}: {self.note}"


_NOTES_INSTRUCTIONS = (
    "Review the test steps below and list what later steps depend on from "
    "earlier ones. Reply with one note per line in the form\n"
    "  kind A->B: short explanation\n"
    "where kind is causal (an earlier action makes a later check true), "
    "temporal (ordering matters) or data (a value set earlier is read "
    "later). Use step numbers. Reply with 'none' if the steps are independent."
)

_NOTE_LINE_RE = re.compile(
    r"^(causal|temporal|data)\s+(\d+(?:\s*->\s*\d+)+)\s*:\s*(.+)$", re.IGNORECASE
)


def infer_dependencies(steps: "list[TestStep]", gateway) -> "list[DependencyNote]":
    if gateway is None or len(steps) < 2:
        return []
    lines = []
    for step in steps:
        lines.append(f"{step.index}. condition: {step.condition_nl or '(none)'}")
        lines.append(f"   action: {step.action_nl}")
        lines.append(f"   expectation: {step.expectation_nl or '(none)'}")
    prompt = Prompt(
        role=PromptRole.INFER_DEPENDENCIES,
        parts=[_NOTES_INSTRUCTIONS, "\n".join(lines)],
    )
    response = gateway.complete(prompt)
    notes = []
    for raw_line in response.splitlines():
        m = _NOTE_LINE_RE.match(raw_line.strip())
        if not m:
            continue
        chain = tuple(int(p) for p in re.split(r"\s*->\s*", m.group(2)))
        if any(s < 1 or s > len(steps) for s in chain):
            continue
        notes.append(DependencyNote(m.group(1).lower(), chain, m.group(3).strip()))
    return notes


# ---------------------------------------------------------------------------
# Stage two: assertion bundles
# ---------------------------------------------------------------------------


@dataclass
class OracleBundle:
    step_index: int
    schema_text: str
    schemas: "list[SchemaDecl]"
    precondition: AssertionProgram
    postcondition: AssertionProgram
    repaired: bool = False

    def to_dict(self) -> dict:
        return {
            "step_index": self.step_index,
            "schemas": self.schema_text,
            "precondition": self.precondition.to_source(),
            "postcondition": self.postcondition.to_source(),
            "repaired": self.repaired,
        }


_ASSERT_INSTRUCTIONS = """\
Write formal checks for one test step. Respond with three sections:

[schemas]
zero or more schema blocks, e.g.
schema Product {
    title: string;
    price: number ge=0;
}
[precondition]
an assertion program that must hold on the page BEFORE the action
[postcondition]
an assertion program that must hold on the page AFTER the action

Programs are a small Python subset: assert statements with optional
messages, comparisons, boolean operators, literals, for/while/if,
assignments, lambda, f-strings and comprehensions. The names in scope are
`state` (the current page), `session` (history of pages) and these
functions: len any all min max sum sorted set zip enumerate range abs
round next reversed filter map re_match re_search re_findall parse_date
parse_datetime. Use state.find("description") to locate elements and
state.extract("instruction", SchemaName) to read typed values. Imports
and attribute names starting with underscores are rejected. If nothing
needs checking, write `assert True`."""


class _BundleRejected(Exception):
    def __init__(self, reason: str):
        self.reason = reason


_SECTION_RE = re.compile(r"^\s*\[(schemas|precondition|postcondition)\]\s*$", re.IGNORECASE)


def split_bundle_sections(text: str) -> "dict[str, str]":
    sections: dict[str, str] = {}
    current = None
    buf: list[str] = []
    body = _strip_fences(text)
    for line in body.splitlines():
        m = _SECTION_RE.match(line)
        if m:
            if current is not None:
                sections[current] = "\n".join(buf).strip()
            current = m.group(1).lower()
            buf = []
        elif current is not None:
            buf.append(line)
    if current is not None:
        sections[current] = "\n".join(buf).strip()
    return sections


def _strip_fences(text: str) -> str:
    stripped = text.strip()
    if stripped.startswith("```"):
        stripped = re.sub(r"^```[a-zA-Z]*\n?", "", stripped)
        stripped = re.sub(r"\n?```$", "", stripped.strip())
    return stripped


def check_bundle(
    step_index: int,
    sections: "dict[str, str]",
    registry: SchemaRegistry,
    has_condition: bool,
) -> OracleBundle:
    """Statically validate one stage-two response.

    Raises _BundleRejected with a reason suitable for a repair prompt.
    The registry is NOT mutated; accepted declarations are returned on
    the bundle and registered by the caller.
    """

    schema_text = sections.get("schemas", "").strip()
    if schema_text.lower() in ("none", "(none)"):
        schema_text = ""
    decls: list[SchemaDecl] = []
    if schema_text:
        try:
            decls = parse_schema_text(schema_text)
        except SchemaParseError as exc:
            raise _BundleRejected(f"schema section: {exc}")
    known = set(registry.names()) | {d.name for d in decls}
    for decl in decls:
        if decl.name in registry:
            try:
                registry.copy().register(decl)
            except SchemaRegistryError as exc:
                raise _BundleRejected(str(exc))

    pre_src = sections.get("precondition", "").strip()
    post_src = sections.get("postcondition", "").strip()
    if not has_condition:
        pre_src = "assert True"
    elif not pre_src:
        raise _BundleRejected("missing [precondition] section")
    if not post_src:
        raise _BundleRejected("missing [postcondition] section")

    programs = []
    for label, src in (("precondition", pre_src), ("postcondition", post_src)):
        try:
            program = parse(src)
        except ProgramParseError as exc:
            raise _BundleRejected(f"{label}: {exc}")
        if not program.has_assertion():
            raise _BundleRejected(f"{label}: program contains no assert statement")
        allowed = set(RESERVED_NAMES) | set(DEFAULT_WHITELIST) | known
        unknown = sorted(program.referenced_names - allowed)
        if unknown:
            raise _BundleRejected(
                f"{label}: unknown name(s) {', '.join(unknown)}; only session, "
                "state, the function whitelist and declared schemas are in scope"
            )
        missing = sorted(program.referenced_schemas - known)
        if missing:
            raise _BundleRejected(
                f"{label}: extract() references undeclared schema(s) {', '.join(missing)}"
            )
        programs.append(program)

    return OracleBundle(
        step_index=step_index,
        schema_text=schema_text,
        schemas=decls,
        precondition=programs[0],
        postcondition=programs[1],
    )


def infer_step_oracle(
    step: TestStep,
    state: State,
    gateway,
    registry: SchemaRegistry,
    notes: "list[DependencyNote]" = (),
    total_steps: int = 0,
) -> OracleBundle:
    """Run stage two for one step, with a single repair attempt."""

    if gateway is None:
        raise OracleInferenceError(
            "oracle inference needs a model gateway; pass precomputed "
            "programs to run without one"
        )
    relevant = [n for n in notes if step.index in n.steps]
    parts = [_ASSERT_INSTRUCTIONS]
    header = f"Step {step.index}"
    if total_steps:
        header += f" of {total_steps}"
    parts.append(
        header
        + f"\ncondition: {step.condition_nl or '(none)'}"
        + f"\naction: {step.action_nl}"
        + f"\nexpectation: {step.expectation_nl or '(none)'}"
    )
    if relevant:
        parts.append("Dependency notes:\n" + "\n".join(n.render() for n in relevant))
    if registry.names():
        parts.append(
            "Schemas already declared (reuse, do not redeclare differently):\n"
            + "\n".join(registry.resolve(name).to_text() for name in registry.names())
        )
    parts.append("Current page:\n" + state.text.full_text())
    prompt = Prompt(role=PromptRole.SYMBOLIZE_AND_ASSERT, parts=parts)

    response = gateway.complete(prompt)
    try:
        bundle = check_bundle(
            step.index, split_bundle_sections(response), registry, bool(step.condition_nl)
        )
    except _BundleRejected as first:
        repair = Prompt(
            role=PromptRole.SYMBOLIZE_AND_ASSERT,
            parts=parts
            + [
                "Your previous response was rejected: " + first.reason,
                "Previous response:\n" + response,
                "Respond again with corrected [schemas]/[precondition]/[postcondition] sections.",
            ],
        )
        second_response = gateway.complete(repair)
        try:
            bundle = check_bundle(
                step.index,
                split_bundle_sections(second_response),
                registry,
                bool(step.condition_nl),
            )
        except _BundleRejected as second:
            raise OracleInferenceError(
                f"step {step.index}: oracle rejected twice "
                f"(first: {first.reason}; then: {second.reason})"
            ) from None
        bundle.repaired = True
    for decl in bundle.schemas:
        registry.register(decl)
    return bundle


def bundle_from_sources(
    step_index: int,
    pre_source: str,
    post_source: str,
    registry: SchemaRegistry,
    schema_text: str = "",
) -> OracleBundle:
    """Build a bundle from known-good program text (no gateway involved)."""

    decls = parse_schema_text(schema_text) if schema_text.strip() else []
    for decl in decls:
        registry.register(decl)
    pre = parse(pre_source.strip() or "assert True")
    post = parse(post_source.strip() or "assert True")
    return OracleBundle(
        step_index=step_index,
        schema_text=schema_text.strip(),
        schemas=decls,
        precondition=pre,
        postcondition=post,
    )


# ---------------------------------------------------------------------------
# Extraction recording
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtractionRecord:
    scope_kind: str  # "state" | "element"
    scope_ref: str  # step index for states, element id for elements
    instruction: str
    schema: str
    values: dict

    def key(self) -> tuple:
        return (self.scope_kind, self.scope_ref, self.instruction, self.schema)

    def to_dict(self) -> dict:
        return {
            "scope_kind": self.scope_kind,
            "scope_ref": self.scope_ref,
            "instruction": self.instruction,
            "schema": self.schema,
            "values": self.values,
        }


def _scope_key(scope) -> "tuple[str, str]":
    if isinstance(scope, State):
        return ("state", str(scope.step_index))
    if isinstance(scope, Element):
        return ("element", scope.element_id)
    return ("state", "?")


class RecordingExtractor:
    """Serves extract() through the gateway and logs every result."""

    def __init__(self, gateway, registry: SchemaRegistry):
        self.gateway = gateway
        self.registry = registry
        self.records: "list[ExtractionRecord]" = []
        self._seen: set = set()

    def __call__(self, scope, instruction, decl):
        instance = gateway_extract(scope, instruction, decl, self.gateway, self.registry)
        kind, ref = _scope_key(scope)
        record = ExtractionRecord(
            scope_kind=kind,
            scope_ref=ref,
            instruction=instruction,
            schema=decl.name,
            values=copy.deepcopy(instance.values),
        )
        if record.key() not in self._seen:
            self._seen.add(record.key())
            self.records.append(record)
        return instance


class ReplayExtractor:
    """Serves extract() from previously recorded values, no gateway."""

    def __init__(self, records: "list[ExtractionRecord]", registry: SchemaRegistry):
        self.registry = registry
        self._by_key = {r.key(): r for r in records}

    def __call__(self, scope, instruction, decl):
        kind, ref = _scope_key(scope)
        record = self._by_key.get((kind, ref, instruction, decl.name))
        if record is None:
            raise ExtractionError(
                f"no recorded extraction for {instruction!r} "
                f"({decl.name}) on {kind} {ref}"
            )
        return validate(decl, record.values, self.registry)


# ---------------------------------------------------------------------------
# Step execution
# ---------------------------------------------------------------------------

STEP_PASSED = "passed"
STEP_PRECONDITION_FAILED = "precondition_failed"
STEP_ACTION_FAILED = "action_failed"
STEP_POSTCONDITION_FAILED = "postcondition_failed"
STEP_ORACLE_ERROR = "oracle_error"

FLAGGING_STATUSES = (
    STEP_PRECONDITION_FAILED,
    STEP_ACTION_FAILED,
    STEP_POSTCONDITION_FAILED,
)


@dataclass
class RunConfig:
    vote: VotePolicy = field(default_factory=VotePolicy)
    action_retries: int = 0
    dsl_step_budget: int = DEFAULT_STEP_BUDGET
    select_with_gateway: bool = False

    def to_dict(self) -> dict:
        return {
            "vote": self.vote.spec(),
            "action_retries": self.action_retries,
            "dsl_step_budget": self.dsl_step_budget,
            "select_with_gateway": self.select_with_gateway,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(
            vote=parse_vote_spec(data.get("vote", "single")),
            action_retries=int(data.get("action_retries", 0)),
            dsl_step_budget=int(data.get("dsl_step_budget", DEFAULT_STEP_BUDGET)),
            select_with_gateway=bool(data.get("select_with_gateway", False)),
        )


@dataclass
class StepOutcome:
    step_index: int
    status: str
    flagged: bool
    attempts_used: int
    pre_verdicts: "list[Verdict]"
    post_verdicts: "list[Verdict]"
    bundle: OracleBundle
    end_state_index: int
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "step_index": self.step_index,
            "status": self.status,
            "flagged": self.flagged,
            "attempts_used": self.attempts_used,
            "message": self.message,
            "bundle": self.bundle.to_dict(),
            "pre_verdicts": [v.to_dict() for v in self.pre_verdicts],
            "post_verdicts": [v.to_dict() for v in self.post_verdicts],
            "end_state_index": self.end_state_index,
        }


@dataclass
class BugReport:
    step_index: int
    phase: str  # precondition | action | postcondition
    message: str
    program: str
    failing_span: "list[int] | None"
    page_id: str

    def to_dict(self) -> dict:
        return {
            "step_index": self.step_index,
            "phase": self.phase,
            "message": self.message,
            "program": self.program,
            "failing_span": self.failing_span,
            "page_id": self.page_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BugReport":
        return cls(
            step_index=data["step_index"],
            phase=data["phase"],
            message=data["message"],
            program=data["program"],
            failing_span=data.get("failing_span"),
            page_id=data.get("page_id", ""),
        )


def _evaluate_votes(
    program: AssertionProgram,
    session: Session,
    state: State,
    registry: SchemaRegistry,
    extractor,
    config: RunConfig,
) -> "list[Verdict]":
    verdicts = []
    for _ in range(config.vote.samples):
        env = EvalEnvironment(
            bindings={"session": session, "state": state},
            schema_registry=registry,
            step_budget=config.dsl_step_budget,
            extractor=extractor,
        )
        verdicts.append(evaluate(program, env))
    return verdicts


def execute_step(
    step: TestStep,
    bundle: OracleBundle,
    driver: Driver,
    executor: ActionExecutor,
    session: Session,
    reidentifier: PageReidentifier,
    registry: SchemaRegistry,
    extractor,
    config: RunConfig,
) -> StepOutcome:
    state_before = session.state
    pre_verdicts = _evaluate_votes(
        bundle.precondition, session, state_before, registry, extractor, config
    )
    resolution = config.vote.resolve(pre_verdicts)
    if resolution != "pass":
        rep = representative(pre_verdicts, resolution)
        status = STEP_ORACLE_ERROR if resolution == "error" else STEP_PRECONDITION_FAILED
        return StepOutcome(
            step_index=step.index,
            status=status,
            flagged=status in FLAGGING_STATUSES,
            attempts_used=0,
            pre_verdicts=pre_verdicts,
            post_verdicts=[],
            bundle=bundle,
            end_state_index=state_before.step_index,
            message=rep.message,
        )

    budget = 1 + config.action_retries
    attempts = 0
    post_verdicts: list[Verdict] = []
    last_error = ""
    while attempts < budget:
        attempts += 1
        try:
            planned = executor.plan(step.action_nl, driver.observe())
            for item in planned:
                apply_action(driver, item.action, session, reidentifier)
        except (ActionCompileError, GroundingError, ActionFailed) as exc:
            last_error = str(exc)
            post_verdicts = []
            continue
        state_after = session.state
        post_verdicts = _evaluate_votes(
            bundle.postcondition, session, state_after, registry, extractor, config
        )
        resolution = config.vote.resolve(post_verdicts)
        if resolution == "pass":
            return StepOutcome(
                step_index=step.index,
                status=STEP_PASSED,
                flagged=False,
                attempts_used=attempts,
                pre_verdicts=pre_verdicts,
                post_verdicts=post_verdicts,
                bundle=bundle,
                end_state_index=state_after.step_index,
                message="",
            )
        if resolution == "error":
            rep = representative(post_verdicts, resolution)
            return StepOutcome(
                step_index=step.index,
                status=STEP_ORACLE_ERROR,
                flagged=False,
                attempts_used=attempts,
                pre_verdicts=pre_verdicts,
                post_verdicts=post_verdicts,
                bundle=bundle,
                end_state_index=state_after.step_index,
                message=rep.message,
            )
        last_error = representative(post_verdicts, resolution).message

    if post_verdicts:
        status = STEP_POSTCONDITION_FAILED
    else:
        status = STEP_ACTION_FAILED
    return StepOutcome(
        step_index=step.index,
        status=status,
        flagged=True,
        attempts_used=attempts,
        pre_verdicts=pre_verdicts,
        post_verdicts=post_verdicts,
        bundle=bundle,
        end_state_index=session.state.step_index,
        message=last_error,
    )


def make_bug_report(outcome: StepOutcome, session: Session) -> BugReport:
    if outcome.status == STEP_PRECONDITION_FAILED:
        phase = "precondition"
        program = outcome.bundle.precondition.to_source()
        verdicts = outcome.pre_verdicts
    elif outcome.status == STEP_POSTCONDITION_FAILED:
        phase = "postcondition"
        program = outcome.bundle.postcondition.to_source()
        verdicts = outcome.post_verdicts
    else:
        phase = "action"
        program = ""
        verdicts = []
    span = None
    if verdicts:
        rep = representative(verdicts, "fail")
        if rep.failing_span is not None:
            s = rep.failing_span
            span = [s.line, s.col, s.end_line, s.end_col]
    end_state = session.history[outcome.end_state_index]
    return BugReport(
        step_index=outcome.step_index,
        phase=phase,
        message=outcome.message,
        program=program,
        failing_span=span,
        page_id=end_state.page_id,
    )


# ---------------------------------------------------------------------------
# Whole-run driver
# ---------------------------------------------------------------------------

RUN_PASSED = "passed"
RUN_BUG = "bug_reported"
RUN_ERROR = "error"


@dataclass
class RunRecord:
    run_id: str
    app_ref: str
    status: str
    steps: "list[TestStep]"
    config: RunConfig
    outcomes: "list[StepOutcome]"
    bug: "BugReport | None"
    notes: "list[DependencyNote]"
    extractions: "list[ExtractionRecord]"
    trace: dict
    requirement_text: str = ""
    requirement_kind: str = "structured"
    error: str = ""
    warnings: "list[str]" = field(default_factory=list)
    gateway_calls: dict = field(default_factory=dict)
    cache_stats: dict = field(default_factory=dict)
    injected_bug: "dict | None" = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "app_ref": self.app_ref,
            "status": self.status,
            "error": self.error,
            "requirement": {
                "text": self.requirement_text,
                "kind": self.requirement_kind,
            },
            "steps": [s.to_dict() for s in self.steps],
            "config": self.config.to_dict(),
            "outcomes": [o.to_dict() for o in self.outcomes],
            "bug": self.bug.to_dict() if self.bug else None,
            "injected_bug": self.injected_bug,
            "notes": [n.to_dict() for n in self.notes],
            "extractions": [e.to_dict() for e in self.extractions],
            "warnings": list(self.warnings),
            "gateway_calls": dict(self.gateway_calls),
            "cache_stats": dict(self.cache_stats),
            "trace": self.trace,
        }

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.to_dict(), indent=2) + "\n").encode("utf-8")


def _default_run_id(app_ref: str, requirement: Requirement) -> str:
    digest = hashlib.sha256(
        (app_ref + "\x00" + requirement.raw_text).encode("utf-8")
    ).hexdigest()
    return "run-" + digest[:12]


def run_test(
    requirement: Requirement,
    driver: Driver,
    gateway=None,
    config: "RunConfig | None" = None,
    app_ref: str = "",
    oracles: "list[OracleBundle] | None" = None,
    registry: "SchemaRegistry | None" = None,
    run_id: "str | None" = None,
    injected_bug: "dict | None" = None,
) -> RunRecord:
    """Parse, infer (unless oracles are supplied), execute, report.

    Stops at the first flagged step. Gateway-free runs require precomputed
    oracles; extraction then needs none either because programs that call
    extract() would fault, which is reported rather than raised.
    """

    config = config or RunConfig()
    registry = registry if registry is not None else SchemaRegistry()
    session = Session()
    reidentifier = PageReidentifier(gateway=gateway)
    executor = ActionExecutor(
        gateway=gateway,
        select_with_gateway=config.select_with_gateway,
    )
    extractor = RecordingExtractor(gateway, registry) if gateway is not None else None

    steps: list[TestStep] = []
    outcomes: list[StepOutcome] = []
    notes: list[DependencyNote] = []
    bug = None
    status = RUN_PASSED
    error_text = ""
    try:
        raw = driver.reset()
        append_state(session, raw, reidentifier)
        steps = parse_requirement(requirement, gateway)
        if oracles is None:
            notes = infer_dependencies(steps, gateway)
        for position, step in enumerate(steps):
            if oracles is not None:
                bundle = oracles[position]
            else:
                bundle = infer_step_oracle(
                    step,
                    session.state,
                    gateway,
                    registry,
                    notes,
                    total_steps=len(steps),
                )
            outcome = execute_step(
                step,
                bundle,
                driver,
                executor,
                session,
                reidentifier,
                registry,
                extractor,
                config,
            )
            outcomes.append(outcome)
            if outcome.status == STEP_ORACLE_ERROR:
                status = RUN_ERROR
                error_text = f"step {step.index}: {outcome.message}"
                break
            if outcome.flagged:
                status = RUN_BUG
                bug = make_bug_report(outcome, session)
                break
    except ReplayDivergence:
        raise  # a transcript mismatch is the replayer's signal, not a run result
    except WeboracleError as exc:
        status = RUN_ERROR
        error_text = str(exc)

    warnings = list(getattr(driver, "warnings", []))
    record = RunRecord(
        run_id=run_id or _default_run_id(app_ref, requirement),
        app_ref=app_ref,
        status=status,
        steps=steps,
        config=config,
        outcomes=outcomes,
        bug=bug,
        notes=notes,
        extractions=extractor.records if extractor else [],
        trace=trace_to_dict(session),
        requirement_text=requirement.raw_text,
        requirement_kind=requirement.source_kind,
        error=error_text,
        warnings=warnings,
        gateway_calls=dict(gateway.calls_by_role) if gateway is not None else {},
        cache_stats={"hits": executor.cache.hits, "misses": executor.cache.misses},
        injected_bug=injected_bug,
    )
    return record
