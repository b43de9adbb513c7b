"""Replaying recorded runs without any model behind the gateway.

Two levels. replay_bug_report re-evaluates the failing assertion against
the frozen trace inside a run record; the bug is confirmed when the
program still refuses to pass on the same state, with extractions served
from the recorded values. replay_run re-executes the whole run, feeding
gateway prompts from the saved transcript, and byte-compares the new run
record against the original so any drift in parsing, grounding,
reidentification or evaluation shows up as a divergence.
"""

from __future__ import annotations

import json

from .dsl import EvalEnvironment, VerdictStatus, evaluate, parse
from .errors import ReplayDivergence, WeboracleError
from .gateway import ModelGateway, PromptRole, TranscriptProfile
from .oracle import (
    ExtractionRecord,
    ReplayExtractor,
    RunConfig,
    RunRecord,
    bundle_from_sources,
    run_test,
)
from .requirements import Requirement
from .schemas import SchemaRegistry, parse_schema_text
from .simapp import BugSpec, BuggyDriver, SimDriver, load_app
from .trace import Session, trace_from_dict


class ReplayError(WeboracleError):
    pass


def _truncated_session(session: Session, end_index: int) -> Session:
    if end_index < 0 or end_index >= len(session.history):
        raise ReplayError(
            f"trace has {len(session.history)} states, cannot truncate at {end_index}"
        )
    clone = Session()
    clone.history = session.history[: end_index + 1]
    clone.page_ids_issued = session.page_ids_issued
    return clone


def _registry_from_record(record: dict) -> SchemaRegistry:
    registry = SchemaRegistry()
    for outcome in record.get("outcomes", []):
        text = outcome.get("bundle", {}).get("schemas", "")
        if text.strip():
            for decl in parse_schema_text(text):
                registry.register(decl)
    return registry


def _extractions_from_record(record: dict) -> "list[ExtractionRecord]":
    out = []
    for raw in record.get("extractions", []):
        out.append(
            ExtractionRecord(
                scope_kind=raw["scope_kind"],
                scope_ref=raw["scope_ref"],
                instruction=raw["instruction"],
                schema=raw["schema"],
                values=raw["values"],
            )
        )
    return out


def replay_bug_report(record: dict) -> dict:
    """Re-check a recorded bug against the frozen trace.

    Returns a report dict: confirmed means the failing program still does
    not pass on the recorded state. Runs entirely offline.
    """

    bug = record.get("bug")
    if not bug:
        raise ReplayError("run record carries no bug report")
    outcome = None
    for candidate in record.get("outcomes", []):
        if candidate["step_index"] == bug["step_index"]:
            outcome = candidate
    if outcome is None:
        raise ReplayError(f"no outcome recorded for step {bug['step_index']}")

    if bug["phase"] == "action":
        return {
            "confirmed": True,
            "phase": "action",
            "step_index": bug["step_index"],
            "verdict": None,
            "message_matches": True,
            "note": "action never completed; nothing to re-evaluate",
        }

    session = trace_from_dict(record["trace"])
    scope = _truncated_session(session, outcome["end_state_index"])
    registry = _registry_from_record(record)
    extractor = ReplayExtractor(_extractions_from_record(record), registry)
    program = parse(bug["program"])
    env = EvalEnvironment(
        bindings={"session": scope, "state": scope.state},
        schema_registry=registry,
        extractor=extractor,
    )
    verdict = evaluate(program, env)
    return {
        "confirmed": verdict.status is not VerdictStatus.PASS,
        "phase": bug["phase"],
        "step_index": bug["step_index"],
        "verdict": verdict.to_dict(),
        "message_matches": verdict.message == bug["message"],
        "note": "",
    }


def build_driver(app_ref: str, injected_bug: "dict | None" = None):
    driver = SimDriver(load_app(app_ref))
    if injected_bug:
        return BuggyDriver(driver, BugSpec.from_dict(injected_bug))
    return driver


def replay_run(record: dict, transcript: "dict | None" = None) -> RunRecord:
    """Re-execute a recorded run deterministically.

    With a transcript, every gateway prompt is answered from the recorded
    entries (and verified against them, so a prompt drift raises
    ReplayDivergence). Without one the run must have been gateway-free;
    oracles are rebuilt from the recorded bundles.
    """

    app_ref = record.get("app_ref", "")
    if not app_ref:
        raise ReplayError("run record has no app reference to rebuild the driver")
    requirement_info = record.get("requirement", {})
    requirement = Requirement(
        raw_text=requirement_info.get("text", ""),
        source_kind=requirement_info.get("kind", "structured"),
    )
    if not requirement.raw_text:
        raise ReplayError("run record has no requirement text")
    config = RunConfig.from_dict(record.get("config", {}))
    driver = build_driver(app_ref, record.get("injected_bug"))

    gateway = None
    oracles = None
    registry = SchemaRegistry()
    if transcript is not None:
        profile = TranscriptProfile.from_dict(transcript)
        gateway = ModelGateway(profile, run_id=record.get("run_id", "replay"))
        inferred = any(
            entry.role == PromptRole.SYMBOLIZE_AND_ASSERT.value
            for entry in profile.entries
        )
        if not inferred:
            oracles = _rebuild_oracles(record, registry)
    else:
        if record.get("gateway_calls"):
            raise ReplayError(
                "the original run used a gateway; replay needs its transcript"
            )
        oracles = _rebuild_oracles(record, registry)

    return run_test(
        requirement,
        driver,
        gateway,
        config,
        app_ref=app_ref,
        oracles=oracles,
        registry=registry,
        run_id=record.get("run_id"),
        injected_bug=record.get("injected_bug"),
    )


def _rebuild_oracles(record: dict, registry: SchemaRegistry):
    oracles = []
    for outcome in record.get("outcomes", []):
        bundle = outcome.get("bundle", {})
        oracles.append(
            bundle_from_sources(
                outcome["step_index"],
                bundle.get("precondition", "assert True"),
                bundle.get("postcondition", "assert True"),
                registry,
                bundle.get("schemas", ""),
            )
        )
    if len(oracles) < len(record.get("steps", [])):
        # the original stopped early; later steps never got a bundle and
        # a faithful replay stops at the same point anyway
        for raw_step in record["steps"][len(oracles):]:
            oracles.append(
                bundle_from_sources(raw_step["index"], "assert True", "assert True", registry)
            )
    return oracles


def compare_records(original: bytes, replayed: bytes) -> "str | None":
    """None when identical, else a short description of the first drift."""

    if original == replayed:
        return None
    a = original.decode("utf-8").splitlines()
    b = replayed.decode("utf-8").splitlines()
    for i, (line_a, line_b) in enumerate(zip(a, b), start=1):
        if line_a != line_b:
            return f"line {i}: {line_a.strip()!r} != {line_b.strip()!r}"
    return f"length differs: {len(a)} lines vs {len(b)}"


def verify_replay(record: dict, transcript: "dict | None" = None) -> "str | None":
    """Re-run and byte-compare. None means the replay matches."""

    original = (json.dumps(record, indent=2) + "\n").encode("utf-8")
    try:
        replayed = replay_run(record, transcript)
    except ReplayDivergence as exc:
        return f"transcript divergence at call {exc.index}: {exc}"
    return compare_records(original, replayed.to_json_bytes())
