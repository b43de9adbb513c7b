"""Conformance suite for the assertion language.

Three layers:
1. the hand-authored corpus, where every entry pins an expected verdict
   and both evaluators must reproduce it exactly;
2. the adversarial corpus, where every entry must come back as a
   classified error from a fixed allowed set, quickly;
3. seeded random expression programs, where the two evaluators must
   agree on status with zero mismatches.
"""

from __future__ import annotations

import json
import random
import time
from pathlib import Path

import pytest

from weboracle.dsl import (
    EvalEnvironment,
    FailureFamily,
    VerdictStatus,
    classify_failure,
    evaluate_source,
)

from conformance_fixtures import FIXTURES, build
from refinterp import reference_evaluate_source

CORPUS_DIR = Path(__file__).resolve().parent.parent / "conformance"

# every grammar construct the language accepts; the hand corpus must
# exercise each one at least once
REQUIRED_PRODUCTIONS = {
    # statements
    "assert",
    "assert_message",
    "assign",
    "assign_chain",
    "assign_unpack",
    "aug_assign",
    "expr_stmt",
    "if",
    "elif_else",
    "for",
    "for_else",
    "while",
    "while_else",
    "break",
    "continue",
    "pass",
    # expressions
    "literal_number",
    "literal_string",
    "literal_bool",
    "literal_none",
    "name",
    "attribute",
    "subscript",
    "slice",
    "call",
    "call_keyword",
    "unary_not",
    "unary_sign",
    "arith",
    "pow_mod",
    "set_ops",
    "bool_and",
    "bool_or",
    "compare",
    "compare_chain",
    "membership",
    "identity",
    "ifexp",
    "lambda",
    "list_display",
    "tuple_display",
    "set_display",
    "dict_display",
    "list_comp",
    "set_comp",
    "dict_comp",
    "gen_comp",
    "comp_multi",
    "comp_filter",
    "fstring",
    "fstring_spec",
    "fstring_conversion",
}

ASSERTION_CATEGORIES = {"existence", "relational", "temporal", "causal", "data_integrity"}

ALL_ERROR_KINDS = {
    "parse_error",
    "unknown_name",
    "unknown_attribute",
    "forbidden_call",
    "type_mismatch",
    "runtime_fault",
    "budget_exceeded",
}


def load_corpus():
    with open(CORPUS_DIR / "corpus.json", encoding="utf-8") as fh:
        data = json.load(fh)
    return data["entries"]


def load_adversarial():
    with open(CORPUS_DIR / "adversarial.json", encoding="utf-8") as fh:
        return json.load(fh)


def run_production(source: str, fixture: str):
    bindings, registry, extractor = build(fixture)
    env = EvalEnvironment(bindings=bindings, schema_registry=registry, extractor=extractor)
    return evaluate_source(source, env)


def run_reference(source: str, fixture: str):
    bindings, registry, extractor = build(fixture)
    return reference_evaluate_source(source, bindings, registry, extractor)


def run_pair(entry):
    """Both evaluators on one corpus entry; returns (verdict, ref)."""

    source = "\n".join(entry["program"])
    return run_production(source, entry["fixture"]), run_reference(source, entry["fixture"])


_CORPUS = load_corpus()


@pytest.mark.parametrize("entry", _CORPUS, ids=[e["name"] for e in _CORPUS])
def test_corpus_entry(entry):
    source = "\n".join(entry["program"])
    verdict = run_production(source, entry["fixture"])
    expect = entry["expect"]

    assert verdict.status.value == expect["status"], verdict.message
    kind = verdict.error_kind.value if verdict.error_kind else None
    assert kind == expect["error_kind"], verdict.message
    family = classify_failure(verdict)
    family_name = family.value if family else None
    assert family_name == expect["family"]

    ref = run_reference(source, entry["fixture"])
    assert ref.status == verdict.status.value, f"reference disagrees: {ref.message}"
    assert ref.kind == kind, f"reference kind disagrees: {ref.message}"


def test_corpus_size_and_coverage():
    entries = _CORPUS
    assert len(entries) >= 50

    seen_productions = set()
    seen_categories = set()
    seen_kinds = set()
    for entry in entries:
        seen_productions.update(entry["productions"])
        seen_categories.add(entry["category"])
        if entry["expect"]["error_kind"]:
            seen_kinds.add(entry["expect"]["error_kind"])

    missing = REQUIRED_PRODUCTIONS - seen_productions
    assert not missing, f"productions never exercised: {sorted(missing)}"
    assert ASSERTION_CATEGORIES <= seen_categories
    assert seen_kinds == ALL_ERROR_KINDS


def test_corpus_runtime_budget():
    started = time.monotonic()
    for entry in _CORPUS:
        run_pair(entry)
    assert time.monotonic() - started < 30.0


_ADVERSARIAL = load_adversarial()


@pytest.mark.parametrize(
    "entry", _ADVERSARIAL["entries"], ids=[e["name"] for e in _ADVERSARIAL["entries"]]
)
def test_adversarial_entry(entry):
    source = "\n".join(entry["program"])
    started = time.monotonic()
    verdict = run_production(source, entry["fixture"])
    elapsed = time.monotonic() - started

    assert elapsed < 5.0, f"adversarial program took {elapsed:.1f}s"
    assert verdict.status is VerdictStatus.ERROR, verdict.message
    assert verdict.error_kind is not None
    assert verdict.error_kind.value in _ADVERSARIAL["allowed_kinds"], (
        f"{verdict.error_kind.value}: {verdict.message}"
    )

    ref = run_reference(source, entry["fixture"])
    assert ref.status == "error"
    assert ref.kind == verdict.error_kind.value


def test_adversarial_never_reaches_host_namespaces():
    # every escape-hatch name must be invisible, not merely unusable
    bindings, registry, extractor = build("minimal")
    env = EvalEnvironment(bindings=bindings, schema_registry=registry, extractor=extractor)
    for name in ("open", "eval", "exec", "getattr", "type", "globals"):
        verdict = evaluate_source(f"assert {name}", env)
        assert verdict.status is VerdictStatus.ERROR
        assert verdict.error_kind.value == "unknown_name"
    # dunder names never even parse
    verdict = evaluate_source("assert __import__", env)
    assert verdict.status is VerdictStatus.ERROR
    assert verdict.error_kind.value == "parse_error"


# ---------------------------------------------------------------------------
# Random expression programs
# ---------------------------------------------------------------------------

_WORDS = ["pen", "book", "cart", "a", "Total"]
_SPECS = [".2f", ">6", "05d"]


def _literal(rng: random.Random) -> str:
    pick = rng.randrange(8)
    if pick == 0:
        return str(rng.randint(-5, 20))
    if pick == 1:
        return repr(round(rng.uniform(-4, 9), 2))
    if pick == 2:
        return '"' + rng.choice(_WORDS) + '"'
    if pick == 3:
        return rng.choice(["True", "False", "None"])
    if pick == 4:
        inner = ", ".join(str(rng.randint(0, 9)) for _ in range(rng.randrange(4)))
        return "[" + inner + "]"
    if pick == 5:
        inner = ", ".join(str(rng.randint(0, 9)) for _ in range(rng.randrange(1, 4)))
        return "(" + inner + ("," if "," not in inner else "") + ")"
    if pick == 6:
        inner = ", ".join(str(rng.randint(0, 6)) for _ in range(rng.randrange(3)))
        return "{" + inner + "}" if inner else "set()"
    keys = rng.sample(_WORDS, k=rng.randrange(1, 3))
    inner = ", ".join(f'"{k}": {rng.randint(0, 9)}' for k in keys)
    return "{" + inner + "}"


def _expr(rng: random.Random, depth: int) -> str:
    if depth <= 0:
        return _literal(rng)
    pick = rng.randrange(14)
    if pick == 0:
        op = rng.choice(["+", "-", "*", "/", "//", "%", "|", "&", "^"])
        return f"({_expr(rng, depth - 1)} {op} {_expr(rng, depth - 1)})"
    if pick == 1:
        return f"({_expr(rng, depth - 1)} ** {rng.randint(0, 4)})"
    if pick == 2:
        op = rng.choice(["not ", "-", "+"])
        return f"({op}{_expr(rng, depth - 1)})"
    if pick == 3:
        op = rng.choice(["==", "!=", "<", "<=", ">", ">="])
        left, right = _expr(rng, depth - 1), _expr(rng, depth - 1)
        if rng.randrange(4) == 0:
            return f"({left} {op} {right} {op} {_expr(rng, depth - 1)})"
        return f"({left} {op} {right})"
    if pick == 4:
        op = rng.choice(["and", "or"])
        return f"({_expr(rng, depth - 1)} {op} {_expr(rng, depth - 1)})"
    if pick == 5:
        return f"({_expr(rng, depth - 1)} if {_expr(rng, depth - 1)} else {_expr(rng, depth - 1)})"
    if pick == 6:
        fn = rng.choice(["len", "sum", "min", "max", "sorted", "set", "any", "all"])
        inner = ", ".join(str(rng.randint(-3, 9)) for _ in range(rng.randrange(1, 5)))
        return f"{fn}([{inner}])"
    if pick == 7:
        fn = rng.choice(["abs", "round"])
        return f"{fn}({_expr(rng, depth - 1)})"
    if pick == 8:
        seq = rng.choice(['"abcdef"', "[0, 1, 2, 3, 4]", "(5, 6, 7)"])
        if rng.randrange(2):
            return f"{seq}[{rng.randint(-7, 7)}]"
        lo, hi = rng.randint(-3, 3), rng.randint(-3, 6)
        return f"{seq}[{lo}:{hi}]"
    if pick == 9:
        var = rng.choice(["i", "j", "v"])
        body = rng.choice([var, f"{var} * 2", f"{var} + 1", f"{var} % 3"])
        source = rng.choice([f"range({rng.randint(0, 6)})", "[2, 4, 6]", '"abc"'])
        if source == '"abc"':
            body = var
        cond = f" if {var} != {rng.randint(0, 4)}" if rng.randrange(2) and source != '"abc"' else ""
        kind = rng.randrange(3)
        if kind == 0:
            return f"[{body} for {var} in {source}{cond}]"
        if kind == 1:
            return f"sum({body} for {var} in {source}{cond})" if source != '"abc"' else f"len([{body} for {var} in {source}])"
        return f"{{{body} for {var} in {source}{cond}}}"
    if pick == 10:
        return f"(lambda q: q + 1)({rng.randint(0, 9)})" if rng.randrange(2) else f"(lambda q: q * q)({rng.randint(-4, 4)})"
    if pick == 11:
        item = rng.choice([str(rng.randint(0, 9)), '"' + rng.choice(_WORDS) + '"'])
        container = rng.choice(['[1, 2, 3]', '"pen and book"', '{"pen": 1}'])
        op = rng.choice(["in", "not in"])
        return f"({item} {op} {container})"
    if pick == 12:
        spec = rng.choice(_SPECS)
        value = rng.randint(0, 99) if spec == "05d" else round(rng.uniform(0, 9), 2)
        return f'len(f"{{{value}:{spec}}}")'
    return f"({_expr(rng, depth - 1)} == {_expr(rng, depth - 1)})"


def generate_program(rng: random.Random) -> str:
    return f"assert {_expr(rng, rng.randint(1, 3))}"


def test_random_expressions_agree():
    rng = random.Random(0xC0FFEE)
    statuses = {"pass": 0, "fail": 0, "error": 0}
    mismatches = []
    for i in range(500):
        source = generate_program(rng)
        verdict = run_production(source, "types")
        ref = run_reference(source, "types")
        if verdict.status.value != ref.status:
            mismatches.append((i, source, verdict.status.value, ref.status))
        statuses[verdict.status.value] += 1
    assert not mismatches, mismatches[:5]
    # the generator must actually explore the verdict space
    assert statuses["pass"] > 50
    assert statuses["fail"] > 50
    assert statuses["error"] > 20


def test_failure_families_cover_all_values():
    seen = set()
    for entry in _CORPUS:
        family = entry["expect"]["family"]
        if family:
            seen.add(family)
    assert seen == {f.value for f in FailureFamily}
