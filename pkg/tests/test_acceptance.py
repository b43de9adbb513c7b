"""Acceptance gate: one test per system-level criterion.

Every test here states a whole-system property. A failure names the
criterion in the test id, and the terminal summary (see conftest.py)
prints one PASS/FAIL line per criterion after the run.
"""

import builtins
import json
import random
import time
from pathlib import Path

import pytest

from weboracle.actions import ActionType, ExecutableAction
from weboracle.cli import EXIT_PASS, main
from weboracle.gateway import ModelGateway, ScriptRule, ScriptedProfile
from weboracle.metrics import (
    BenchmarkCase,
    GroundTruth,
    precision_recall,
    run_benchmark,
    score_trace,
    write_report,
)
from weboracle.oracle import RunConfig, VotePolicy, bundle_from_sources, run_test
from weboracle.replay import build_driver, replay_bug_report
from weboracle.requirements import Requirement
from weboracle.schemas import SchemaRegistry
from weboracle.simapp import SimDriver, load_app
from weboracle.trace import PageReidentifier, Session, State, append_state, element, trace_to_dict

from test_conformance import (
    ALL_ERROR_KINDS,
    ASSERTION_CATEGORIES,
    REQUIRED_PRODUCTIONS,
    generate_program,
    load_adversarial,
    load_corpus,
    run_pair,
    run_production,
    run_reference,
)
from test_oracle import V_FAIL, V_PASS, verdicts_for

DESK = str(Path(__file__).resolve().parent.parent / "benchmark" / "desk")


# ---------------------------------------------------------------------------
# Criterion 1: DSL conformance
# ---------------------------------------------------------------------------


def test_criterion_1_dsl_conformance():
    started = time.monotonic()

    entries = load_corpus()
    assert len(entries) >= 50, f"only {len(entries)} hand-authored programs"

    productions, categories, kinds = set(), set(), set()
    disagreements = []
    for entry in entries:
        verdict, ref = run_pair(entry)
        kind = verdict.error_kind.value if verdict.error_kind else None
        if verdict.status.value != ref.status or kind != ref.kind:
            disagreements.append(entry["name"])
        productions.update(entry["productions"])
        categories.add(entry["category"])
        if entry["expect"]["error_kind"]:
            kinds.add(entry["expect"]["error_kind"])
    assert not disagreements, f"reference evaluator disagrees on {disagreements}"
    missing = REQUIRED_PRODUCTIONS - productions
    assert not missing, f"grammar productions never exercised: {sorted(missing)}"
    assert ASSERTION_CATEGORIES <= categories
    assert kinds == ALL_ERROR_KINDS, f"error kinds uncovered: {ALL_ERROR_KINDS - kinds}"

    rng = random.Random(0xC0FFEE)
    mismatches = 0
    for _ in range(500):
        source = generate_program(rng)
        if run_production(source, "types").status.value != run_reference(source, "types").status:
            mismatches += 1
    assert mismatches == 0

    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"conformance pass took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# Criterion 2: metrics exactness
# ---------------------------------------------------------------------------

_MARKER_POST = (
    'texts = [e.text for e in state.elements if e.role == "text"]\n'
    'assert texts and texts[0] == "ok", "marker bad"\n'
)


def _marker_state(index: int, text: str) -> State:
    root = element(
        "root",
        "page",
        "",
        box=(0, 0, 400, 300),
        children=[
            element("head", "heading", f"Step {index}", box=(10, 10, 200, 40)),
            element("marker", "text", text, box=(10, 60, 200, 90)),
        ],
    )
    return State(
        step_index=index,
        page_id=f"p{index}",
        summary=f"step {index}",
        url=f"/s{index}",
        root=root,
        elements=list(root.walk()),
    )


def _synthetic_record(markers: "list[bool]") -> dict:
    """A run that executed len(markers) steps; marker k says whether the
    ground-truth assertion holds on the end state of step k."""

    session = Session()
    session.history.append(_marker_state(0, "start"))
    for i, ok in enumerate(markers, start=1):
        session.history.append(_marker_state(i, "ok" if ok else "bad"))
    outcomes = [
        {"step_index": i, "status": "passed", "end_state_index": i}
        for i in range(1, len(markers) + 1)
    ]
    return {
        "status": "passed",
        "trace": trace_to_dict(session),
        "outcomes": outcomes,
        "extractions": [],
    }


# (name, markers for executed steps, total ground-truth steps,
#  expected holds, expected holding prefix). Rows where the executed
# count is below the total model a truncated run.
_TRACE_TABLE = [
    ("full-pass-1", [True], 1, [True], 1),
    ("fail-only-1", [False], 1, [False], 0),
    ("full-pass-2", [True, True], 2, [True, True], 2),
    ("fail-last-2", [True, False], 2, [True, False], 1),
    ("empty-prefix-2", [False, True], 2, [False, True], 0),
    ("all-fail-2", [False, False], 2, [False, False], 0),
    ("full-pass-3", [True, True, True], 3, [True, True, True], 3),
    ("fail-last-3", [True, True, False], 3, [True, True, False], 2),
    ("mid-break-3", [True, False, True], 3, [True, False, True], 1),
    ("empty-prefix-3", [False, True, True], 3, [False, True, True], 0),
    ("tail-fail-3", [True, False, False], 3, [True, False, False], 1),
    ("late-only-3", [False, False, True], 3, [False, False, True], 0),
    ("full-pass-4", [True] * 4, 4, [True] * 4, 4),
    ("fail-last-4", [True, True, True, False], 4, [True, True, True, False], 3),
    ("half-4", [True, True, False, False], 4, [True, True, False, False], 2),
    ("alternating-4", [True, False, True, False], 4, [True, False, True, False], 1),
    ("truncated-4", [True, True], 4, [True, True, False, False], 2),
    ("full-pass-5", [True] * 5, 5, [True] * 5, 5),
    ("truncated-5", [True, True, True], 5, [True, True, True, False, False], 3),
    ("truncated-at-start-3", [], 3, [False, False, False], 0),
]

# (tp, fp, fn, expected precision, expected recall); None marks the
# undefined 0/0 ratios
_PR_TABLE = [
    (0, 0, 0, None, None),
    (0, 0, 4, None, 0.0),
    (0, 3, 0, 0.0, None),
    (3, 1, 2, 0.75, 0.6),
    (5, 0, 0, 1.0, 1.0),
    (2, 2, 2, 0.5, 0.5),
    (1, 0, 3, 1.0, 0.25),
    (0, 2, 5, 0.0, 0.0),
]


def test_criterion_2_metrics_exactness():
    assert len(_TRACE_TABLE) == 20
    for name, markers, total, expected_holds, prefix in _TRACE_TABLE:
        truth = GroundTruth(
            schema_text="",
            steps=[{"postcondition": _MARKER_POST} for _ in range(total)],
        )
        scored = score_trace(truth, _synthetic_record(markers), None)
        assert scored["holds"] == expected_holds, name
        assert scored["tc"] == (1 if all(expected_holds) else 0), name
        assert scored["ct"] == prefix / total, name
        # clean run, nothing flagged
        assert scored["counts"]["tn"] == 1 and scored["counts"]["fp"] == 0, name

    for tp, fp, fn, precision, recall in _PR_TABLE:
        got = precision_recall(tp, fp, fn)
        assert got["precision"] == precision, (tp, fp, fn)
        assert got["recall"] == recall, (tp, fp, fn)


# ---------------------------------------------------------------------------
# Criterion 3: voting truth table
# ---------------------------------------------------------------------------


def test_criterion_3_vote_truth_table():
    checked = 0
    for m in (1, 3, 4, 5):
        for passes in range(m + 1):
            verdicts = verdicts_for(*([V_PASS] * passes + [V_FAIL] * (m - passes)))

            majority = VotePolicy("majority", samples=m).resolve(verdicts)
            assert majority == ("pass" if passes > m / 2 else "fail"), (m, passes)
            checked += 1

            for threshold in (0.25, 0.5, 0.75):
                got = VotePolicy("threshold", samples=m, threshold=threshold).resolve(verdicts)
                assert got == ("pass" if passes / m > threshold else "fail"), (
                    m,
                    passes,
                    threshold,
                )
                checked += 1
    # m=1 must also agree with plain single voting
    assert VotePolicy("single").resolve(verdicts_for(V_PASS)) == "pass"
    assert VotePolicy("single").resolve(verdicts_for(V_FAIL)) == "fail"
    assert checked == (2 + 4 + 5 + 6) * 4


# ---------------------------------------------------------------------------
# Criteria 4, 5, 8: the desk benchmark
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_runs():
    started = time.monotonic()
    first = run_benchmark(DESK, prefer_scripts=True)
    elapsed = time.monotonic() - started
    second = run_benchmark(DESK, prefer_scripts=True)
    return {"first": first, "second": second, "elapsed": elapsed}


def test_criterion_4_desk_benchmark_clean(desk_runs):
    report = desk_runs["first"]
    assert len(report.results) == 12
    for result in report.results:
        assert result.error == "", f"{result.case_id}: {result.error}"
        assert result.mode == "scripted", result.case_id
        assert result.clean_status == "passed", result.case_id
        assert result.tc == 1, result.case_id
        assert result.ct == 1.0, result.case_id
        assert result.counts["clean_flagged_step"] is None, result.case_id

    aggregate = report.aggregate()
    assert aggregate["mean_tc"] == 1.0
    assert aggregate["mean_ct"] == 1.0
    assert aggregate["fp"] == 0
    assert set(aggregate["by_app"]) == {
        "builtin:minidocs",
        "builtin:minishop",
        "builtin:minishop_stocked",
    }
    assert desk_runs["elapsed"] < 60.0, f"benchmark took {desk_runs['elapsed']:.1f}s"


def test_criterion_5_desk_benchmark_bugged(desk_runs):
    report = desk_runs["first"]
    for result in report.results:
        assert result.bug_status == "bug_reported", result.case_id
        assert result.counts["tp"] == 1, result.case_id
        assert result.counts["flagged_step"] == result.counts["expected_step"], result.case_id
        assert result.bug_confirmed is True, result.case_id

        # the recorded bug must still fail when re-evaluated on its own trace
        confirmation = replay_bug_report(result.bug_record)
        assert confirmation["confirmed"] is True, result.case_id
        if confirmation["verdict"] is not None:
            assert confirmation["verdict"]["status"] != "pass", result.case_id

    aggregate = report.aggregate()
    assert aggregate["tp"] == 12 and aggregate["fn"] == 0 and aggregate["fp"] == 0
    assert aggregate["precision"] == 1.0
    assert aggregate["recall"] == 1.0
    assert set(aggregate["by_category"]) == {
        "data_inconsistency",
        "missing_element",
        "navigation_failure",
        "noop_action",
    }
    for category, slot in aggregate["by_category"].items():
        assert slot == {"cases": 3, "detected": 3, "confirmed": 3}, category


# ---------------------------------------------------------------------------
# Criterion 6: cross-state cart oracle
# ---------------------------------------------------------------------------

_CART_REQUIREMENT = """\
steps:
- action: click the cart link
  expectation: the cart lists both prior items
- action: click the continue shopping link
  expectation: the product list is shown again
- action: click the "Add to cart" button for camera
  expectation: the cart link shows 3 items
- action: click the cart link
  expectation: the prior items are kept, the camera is added and the subtotal adds up
"""

# evaluated after revisiting the cart: session.history[1] is the cart as
# it looked before the camera was added
_CART_CROSS_STATE_POST = """\
prior = session.history[1]
prior_rows = [e for e in prior.elements if e.role == "listitem"]
rows = [e for e in state.elements if e.role == "listitem"]
for line in prior_rows:
    assert any(r.text == line.text for r in rows), f"prior line lost: {line.text}"
assert any("camera" in r.text for r in rows), "added item missing"
assert len(rows) == len(prior_rows) + 1, "cart row count wrong"
prior_total = 2.0 + 3.0
added_price = 4.0
labels = state.find("subtotal")
assert len(labels) >= 1, "no subtotal shown"
assert f"${prior_total + added_price:.2f}" in labels[0].text, "Cart subtotal mismatch"
"""

_CART_PERTURBATION = {
    "category": "data_inconsistency",
    "trigger": {"action_type": "click", "target": "add-*"},
    "payload": {"delta": {"path": "cart.subtotal", "amount": 1.0}},
    "expected_step": 4,
}


def _cart_oracles(registry):
    return [
        bundle_from_sources(
            1,
            "",
            'rows = [e for e in state.elements if e.role == "listitem"]\n'
            'assert any("pen" in r.text for r in rows), "prior pen line missing"\n'
            'assert any("book" in r.text for r in rows), "prior book line missing"\n'
            'assert "Subtotal: $5.00" in state.find("subtotal")[0].text, "prior subtotal wrong"',
            registry,
        ),
        bundle_from_sources(
            2,
            "",
            'assert any(e.role == "button" and "Add to cart" in e.text for e in state.elements), '
            '"product list missing"',
            registry,
        ),
        bundle_from_sources(
            3,
            "",
            'assert "Cart (3)" in state.find("cart link")[0].text, "cart badge is not 3"',
            registry,
        ),
        bundle_from_sources(4, "", _CART_CROSS_STATE_POST, registry),
    ]


def _cart_run(bug: "dict | None" = None):
    registry = SchemaRegistry()
    return run_test(
        Requirement.from_text(_CART_REQUIREMENT),
        build_driver("builtin:minishop_stocked", bug),
        config=RunConfig(),
        app_ref="builtin:minishop_stocked",
        oracles=_cart_oracles(registry),
        registry=registry,
        injected_bug=bug,
        run_id="cart-consistency",
    )


@pytest.fixture(scope="module")
def cart_runs():
    return {"clean": _cart_run(), "perturbed": _cart_run(_CART_PERTURBATION)}


def test_criterion_6_cross_state_cart_oracle(cart_runs):
    clean = cart_runs["clean"]
    assert clean.status == "passed", clean.error or clean.to_dict()["outcomes"]
    assert all(o.status == "passed" for o in clean.outcomes)

    perturbed = cart_runs["perturbed"]
    assert perturbed.status == "bug_reported"
    assert perturbed.bug is not None
    assert perturbed.bug.step_index == 4
    assert perturbed.bug.phase == "postcondition"
    assert perturbed.bug.message == "Cart subtotal mismatch"
    failing = perturbed.outcomes[-1]
    assert failing.status == "postcondition_failed"
    assert failing.post_verdicts[-1].status.value == "fail"
    assert failing.post_verdicts[-1].message == "Cart subtotal mismatch"

    confirmation = replay_bug_report(perturbed.to_dict())
    assert confirmation["confirmed"] is True
    assert confirmation["message_matches"] is True


# ---------------------------------------------------------------------------
# Criterion 7: page reidentification
# ---------------------------------------------------------------------------


def test_criterion_7_page_reidentification():
    gateway = ModelGateway(
        ScriptedProfile([ScriptRule(role="reidentify_page", responses=["same"], repeat=True)]),
        run_id="reident",
    )
    reidentifier = PageReidentifier(gateway=gateway)
    session = Session()
    driver = SimDriver(load_app("builtin:minishop"))

    append_state(session, driver.reset(), reidentifier)
    append_state(
        session, driver.perform(ExecutableAction(ActionType.CLICK, target_id="nav-cart")), reidentifier
    )
    append_state(
        session, driver.perform(ExecutableAction(ActionType.CLICK, target_id="nav-home")), reidentifier
    )

    assert [s.page_id for s in session.history] == ["p0", "p1", "p0"]
    # only the A-revisit was ambiguous enough to consult the model
    assert gateway.calls_by_role == {"reidentify_page": 1}
    assert [d.consulted for d in session.reident_log] == [False, False, True]


# ---------------------------------------------------------------------------
# Criterion 8: determinism and replay
# ---------------------------------------------------------------------------


def _record_bytes(record_dict: dict) -> bytes:
    return (json.dumps(record_dict, indent=2) + "\n").encode("utf-8")


def _rebuild_with_transcript(case: BenchmarkCase, injected: "dict | None", run_id: str):
    """Repeat one benchmark run with a fresh recording gateway."""

    gateway = ModelGateway(ScriptedProfile.from_dict(case.script), run_id=case.case_id)
    record = run_test(
        case.requirement,
        build_driver(case.app_ref, injected),
        gateway,
        RunConfig(),
        app_ref=case.app_ref,
        injected_bug=injected,
        run_id=run_id,
    )
    return record, gateway.transcript_dict()


def test_criterion_8_determinism_and_replay(desk_runs, cart_runs, tmp_path):
    first, second = desk_runs["first"], desk_runs["second"]

    # two executions with identical scripts: byte-identical records and reports
    assert len(first.results) == len(second.results) == 12
    for a, b in zip(first.results, second.results):
        assert _record_bytes(a.clean_record) == _record_bytes(b.clean_record), a.case_id
        assert _record_bytes(a.bug_record) == _record_bytes(b.bug_record), a.case_id
    write_report(first, tmp_path / "first")
    write_report(second, tmp_path / "second")
    for path in sorted((tmp_path / "first").rglob("*.json")) + sorted(
        (tmp_path / "first").rglob("*.txt")
    ):
        twin = tmp_path / "second" / path.relative_to(tmp_path / "first")
        assert path.read_bytes() == twin.read_bytes(), path.name

    # every scripted benchmark run replays through the CLI with its transcript
    for result in first.results:
        case = BenchmarkCase.load(Path(DESK) / "cases" / result.case_id)
        for flavor, stored in (("clean", result.clean_record), ("bugged", result.bug_record)):
            injected = case.bug.to_dict() if flavor == "bugged" else None
            rebuilt, transcript = _rebuild_with_transcript(
                case, injected, f"{case.case_id}-{flavor}"
            )
            assert _record_bytes(rebuilt.to_dict()) == _record_bytes(stored), (
                f"{result.case_id} {flavor} re-run drifted"
            )
            record_file = tmp_path / f"{result.case_id}-{flavor}.json"
            transcript_file = tmp_path / f"{result.case_id}-{flavor}-transcript.json"
            record_file.write_bytes(_record_bytes(stored))
            transcript_file.write_text(json.dumps(transcript), encoding="utf-8")
            code = main(
                ["replay", "--record", str(record_file), "--transcript", str(transcript_file)]
            )
            assert code == EXIT_PASS, f"{result.case_id} {flavor} replay exited {code}"

    # gateway-free acceptance runs replay without any transcript
    for name, record in (("cart-clean", cart_runs["clean"]), ("cart-bugged", cart_runs["perturbed"])):
        record_file = tmp_path / f"{name}.json"
        record_file.write_bytes(_record_bytes(record.to_dict()))
        assert main(["replay", "--record", str(record_file)]) == EXIT_PASS, name
    bug_file = tmp_path / "cart-bugged.json"
    assert main(["replay", "--record", str(bug_file), "--bug-only"]) == EXIT_PASS


# ---------------------------------------------------------------------------
# Criterion 9: sandbox safety
# ---------------------------------------------------------------------------


def test_criterion_9_sandbox_safety():
    data = load_adversarial()
    allowed = set(data["allowed_kinds"])
    assert allowed <= {"parse_error", "unknown_name", "forbidden_call", "budget_exceeded"}
    assert len(data["entries"]) >= 20

    opened = []
    real_open = builtins.open

    def watched_open(*args, **kwargs):
        opened.append(args[0] if args else "?")
        return real_open(*args, **kwargs)

    builtins.open = watched_open
    try:
        for entry in data["entries"]:
            source = "\n".join(entry["program"])
            started = time.monotonic()
            verdict = run_production(source, entry["fixture"])
            elapsed = time.monotonic() - started
            assert elapsed < 5.0, f"{entry['name']} ran {elapsed:.1f}s"
            assert verdict.status.value == "error", f"{entry['name']}: {verdict.status}"
            assert verdict.error_kind is not None, entry["name"]
            assert verdict.error_kind.value in allowed, (
                f"{entry['name']}: {verdict.error_kind.value}"
            )
    finally:
        builtins.open = real_open

    assert opened == [], f"programs touched the filesystem: {opened[:3]}"
