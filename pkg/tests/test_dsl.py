"""Language API behavior not already pinned by the conformance corpus."""

import pytest

from weboracle.dsl import (
    DEFAULT_STEP_BUDGET,
    EvalEnvironment,
    FailureFamily,
    ProgramParseError,
    VerdictStatus,
    classify_failure,
    evaluate,
    evaluate_source,
    parse,
)

from conformance_fixtures import build


def env_for(fixture="minimal", **overrides):
    bindings, registry, extractor = build(fixture)
    kwargs = {"bindings": bindings, "schema_registry": registry, "extractor": extractor}
    kwargs.update(overrides)
    return EvalEnvironment(**kwargs)


def test_parse_reports_free_names_and_schemas():
    program = parse(
        "x = 1\n"
        "items = [e for e in state.elements]\n"
        "p = state.extract(\"info\", schema=Product)\n"
        "assert x and helper(items)"
    )
    assert "state" in program.referenced_names
    assert "helper" in program.referenced_names
    assert "Product" in program.referenced_names
    assert "x" not in program.referenced_names  # bound by assignment
    assert "e" not in program.referenced_names  # comprehension target
    assert program.referenced_schemas == frozenset({"Product"})


def test_parse_string_schema_reference_is_tracked():
    program = parse('sym = state.extract("x", schema="Cart")\nassert sym')
    assert "Cart" in program.referenced_schemas


def test_to_source_is_canonical():
    program = parse("assert ( 1+2 )==3")
    assert program.to_source() == "assert 1 + 2 == 3"


def test_has_assertion_looks_into_blocks():
    assert parse("for i in range(2):\n    assert i >= 0").has_assertion()
    assert not parse("x = 1").has_assertion()


def test_program_length_cap():
    with pytest.raises(ProgramParseError):
        parse("assert True" + " " * 200_000)


def test_evaluate_requires_mandatory_bindings():
    with pytest.raises(ValueError):
        evaluate(parse("assert True"), EvalEnvironment(bindings={}))


def test_verdict_carries_span_and_dict_shape():
    verdict = evaluate_source("assert 1 == 2", env_for())
    assert verdict.status is VerdictStatus.FAIL
    data = verdict.to_dict()
    assert data["status"] == "fail"
    assert data["span"][0] == 1  # failing line
    assert "error_kind" not in data


def test_fail_message_quotes_the_source_segment():
    verdict = evaluate_source("assert 2 + 2 == 5", env_for())
    assert "2 + 2 == 5" in verdict.message


def test_touched_states_tracks_history_access():
    verdict = evaluate_source(
        "assert len(session.history[0].elements) >= 0 and len(state.elements) >= 0",
        env_for("cart"),
    )
    assert verdict.passed
    assert verdict.touched_states == (0, 2)


def test_budget_is_configurable_and_deterministic():
    env_small = env_for(step_budget=50)
    verdict = evaluate_source("total = 0\nfor i in range(100):\n    total += 1\nassert total", env_small)
    assert verdict.status is VerdictStatus.ERROR
    assert verdict.error_kind.value == "budget_exceeded"

    results = set()
    for _ in range(3):
        v = evaluate_source(
            "total = 0\nfor i in range(100):\n    total += 1\nassert total == 100",
            env_for(),
        )
        results.add((v.status, v.message))
    assert len(results) == 1
    assert DEFAULT_STEP_BUDGET == 100_000


def test_bindings_are_never_mutated():
    bindings, registry, extractor = build("minimal")
    env = EvalEnvironment(bindings=bindings, schema_registry=registry, extractor=extractor)
    before = dict(bindings)
    evaluate_source("state = 1\nsession = 2\nassert state == 1", env)
    assert bindings == before  # program assignments shadow, never replace


def test_classify_failure_families():
    cases = {
        "assert False": FailureFamily.ASSERTION_FAIL,
        "assert nope": FailureFamily.SYMBOL_MISUSE,
        "assert state.nope": FailureFamily.DSL_MISUSE,
        "assert 1 / 0": FailureFamily.RUNTIME_FAULT,
        "import os": FailureFamily.DSL_MISUSE,
    }
    for source, family in cases.items():
        verdict = evaluate_source(source, env_for())
        assert classify_failure(verdict) is family, source
    assert classify_failure(evaluate_source("assert True", env_for())) is None


def test_same_program_same_message_across_runs():
    source = 'rows = sorted({"b", "a"})\nassert rows == ["a", "z"], f"got {rows}"'
    messages = {evaluate_source(source, env_for()).message for _ in range(3)}
    assert messages == {"got ['a', 'b']"}
