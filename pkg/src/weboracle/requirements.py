"""Requirement intake: turning test descriptions into ordered steps.

A requirement arrives either structured (YAML with explicit steps) or as
plain prose. Structured input never touches the model; plain text is
turned into steps by one gateway call, with a single repair round if the
response does not parse. Every step ends up as (condition, action,
expectation); missing conditions and expectations become empty strings
and are flagged as inferred.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import WeboracleError
from .gateway import Prompt, PromptRole


class RequirementParseError(WeboracleError):
    """The requirement cannot be turned into valid steps."""


@dataclass
class TestStep:
    index: int  # 1-based position in the requirement
    condition_nl: str
    action_nl: str
    expectation_nl: str
    condition_inferred: bool = False
    expectation_inferred: bool = False

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "condition": self.condition_nl,
            "action": self.action_nl,
            "expectation": self.expectation_nl,
            "condition_inferred": self.condition_inferred,
            "expectation_inferred": self.expectation_inferred,
        }


@dataclass
class Requirement:
    raw_text: str
    source_kind: str  # "structured" or "plain"

    @classmethod
    def from_text(cls, text: str) -> "Requirement":
        return cls(raw_text=text, source_kind=detect_source_kind(text))

    @classmethod
    def from_file(cls, path: "str | Path") -> "Requirement":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix in (".yaml", ".yml", ".json"):
            return cls(raw_text=text, source_kind="structured")
        if path.suffix in (".txt", ".md"):
            return cls(raw_text=text, source_kind="plain")
        return cls.from_text(text)


def detect_source_kind(text: str) -> str:
    """Structured means YAML that already carries explicit steps."""

    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError:
        return "plain"
    if isinstance(data, list) and data and all(isinstance(i, dict) for i in data):
        return "structured"
    if isinstance(data, dict) and "steps" in data:
        return "structured"
    return "plain"


_STEP_KEYS = {"condition", "action", "expectation"}


def parse_requirement(req: Requirement, gateway=None) -> list[TestStep]:
    if req.source_kind == "structured":
        return _parse_structured(req.raw_text)
    if gateway is None:
        raise RequirementParseError("plain-text requirements need a model gateway")
    return _parse_plain(req.raw_text, gateway)


def _parse_structured(text: str) -> list[TestStep]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise RequirementParseError(f"requirement is not valid YAML: {exc}") from None
    if isinstance(data, dict):
        items = data.get("steps")
    else:
        items = data
    if not isinstance(items, list) or not items:
        raise RequirementParseError("requirement has no steps")
    return _build_steps(items)


def _build_steps(items: list) -> list[TestStep]:
    steps: list[TestStep] = []
    for i, item in enumerate(items, start=1):
        if not isinstance(item, dict):
            raise RequirementParseError(f"step {i} is not a mapping")
        unknown = set(item) - _STEP_KEYS
        if unknown:
            raise RequirementParseError(f"step {i} has unknown keys {sorted(unknown)}")
        action = item.get("action")
        if not isinstance(action, str) or not action.strip():
            raise RequirementParseError(f"step {i} is missing an action")
        condition = item.get("condition")
        expectation = item.get("expectation")
        steps.append(
            TestStep(
                index=i,
                condition_nl=str(condition).strip() if condition else "",
                action_nl=action.strip(),
                expectation_nl=str(expectation).strip() if expectation else "",
                condition_inferred=not condition,
                expectation_inferred=not expectation,
            )
        )
    return steps


_PARSE_INSTRUCTIONS = """\
Split the requirement below into ordered test steps. Respond with a JSON
array only. Each entry is an object with keys "condition", "action" and
"expectation"; "action" is mandatory and must be a concrete UI action,
the other two may be empty strings when the requirement does not state
them. Do not invent steps that are not in the requirement."""


def _parse_plain(text: str, gateway) -> list[TestStep]:
    prompt = Prompt(
        role=PromptRole.PARSE_REQUIREMENT,
        parts=[_PARSE_INSTRUCTIONS, "Requirement:\n" + text.strip()],
    )
    response = gateway.complete(prompt)
    items, error = _decode_step_json(response)
    if error is not None:
        repair = Prompt(
            role=PromptRole.PARSE_REQUIREMENT,
            parts=[
                _PARSE_INSTRUCTIONS,
                "Requirement:\n" + text.strip(),
                f"Your previous response was rejected: {error}\n"
                "Respond again with only the JSON array.",
            ],
        )
        response = gateway.complete(repair)
        items, error = _decode_step_json(response)
        if error is not None:
            raise RequirementParseError(f"model response unusable after repair: {error}")
    try:
        return _build_steps(items)
    except RequirementParseError:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        raise RequirementParseError(f"bad step structure: {exc}") from None


def _decode_step_json(response: str):
    text = response.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-zA-Z]*\n?", "", text)
        text = re.sub(r"\n?```$", "", text.strip())
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        return None, f"not valid JSON ({exc})"
    if not isinstance(data, list) or not data:
        return None, "expected a non-empty JSON array of steps"
    for i, item in enumerate(data, start=1):
        if not isinstance(item, dict):
            return None, f"step {i} is not an object"
        if not str(item.get("action", "")).strip():
            return None, f"step {i} has no action"
        unknown = set(item) - _STEP_KEYS
        if unknown:
            return None, f"step {i} has unknown keys {sorted(unknown)}"
    return data, None


def steps_to_structured(steps: list[TestStep]) -> str:
    """Render steps back to the structured YAML form.

    Inferred (absent) conditions and expectations are omitted so a
    structured requirement round-trips to itself modulo whitespace.
    """

    items = []
    for step in steps:
        item: dict = {}
        if step.condition_nl or not step.condition_inferred:
            item["condition"] = step.condition_nl
        item["action"] = step.action_nl
        if step.expectation_nl or not step.expectation_inferred:
            item["expectation"] = step.expectation_nl
        items.append(item)
    return yaml.safe_dump({"steps": items}, sort_keys=False, allow_unicode=True)
