"""Model gateway: one narrow funnel for every model interaction.

All prompts go through a ModelGateway, which delegates to a profile and
records an ordered transcript. Profiles:

- ScriptedProfile: offline, deterministic. Rules keyed by prompt role and
  an optional regex over the prompt text; each rule holds a response
  queue. A response is either literal text or a capture spec that builds
  the text from regex captures over the prompt itself, so one script can
  answer correctly for whatever page rendering the prompt embeds.
- TranscriptProfile: replays a recorded transcript and verifies each
  incoming prompt byte-for-byte, raising ReplayDivergence on mismatch.
- RemoteProfile: HTTP client for a live endpoint. Never used in tests.
"""

from __future__ import annotations

import json
import re
import string
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import GatewayUnavailable, ReplayDivergence, WeboracleError


class ScriptError(WeboracleError):
    """A scripted profile cannot answer a prompt."""


class PromptRole(str, Enum):
    PARSE_REQUIREMENT = "parse_requirement"
    INFER_DEPENDENCIES = "infer_dependencies"
    SYMBOLIZE_AND_ASSERT = "symbolize_and_assert"
    REIDENTIFY_PAGE = "reidentify_page"
    SELECT_ACTION = "select_action"
    COMPILE_ACTION = "compile_action"
    EXTRACT_SYMBOL = "extract_symbol"
    SUMMARIZE_STATE = "summarize_state"


@dataclass
class Prompt:
    role: PromptRole
    parts: list[str]
    metadata: dict = field(default_factory=dict)

    @property
    def text(self) -> str:
        return "\n\n".join(self.parts)


@dataclass
class TranscriptEntry:
    index: int
    role: str
    prompt_text: str
    response: str


class ModelGateway:
    """Thread-safe wrapper that logs every exchange."""

    def __init__(self, profile, run_id: str = "run"):
        self.profile = profile
        self.run_id = run_id
        self._lock = threading.Lock()
        self._entries: list[TranscriptEntry] = []
        self.calls_by_role: dict[str, int] = {}

    def complete(self, prompt: Prompt) -> str:
        with self._lock:
            response = self.profile.complete(prompt)
            entry = TranscriptEntry(
                index=len(self._entries),
                role=prompt.role.value,
                prompt_text=prompt.text,
                response=response,
            )
            self._entries.append(entry)
            self.calls_by_role[prompt.role.value] = (
                self.calls_by_role.get(prompt.role.value, 0) + 1
            )
            return response

    def transcript(self) -> list[TranscriptEntry]:
        with self._lock:
            return list(self._entries)

    def transcript_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "entries": [
                {
                    "index": e.index,
                    "role": e.role,
                    "prompt": e.prompt_text,
                    "response": e.response,
                }
                for e in self.transcript()
            ],
        }


# ---------------------------------------------------------------------------
# Scripted profile
# ---------------------------------------------------------------------------


@dataclass
class ScriptRule:
    role: str
    match: "str | None" = None
    responses: list = field(default_factory=list)
    repeat: bool = False
    consumed: int = 0

    def matches(self, prompt: Prompt) -> bool:
        if self.role != prompt.role.value:
            return False
        if self.match is None:
            return True
        return re.search(self.match, prompt.text) is not None


class ScriptedProfile:
    """Deterministic offline responder.

    In strict mode (the default) every prompt must match exactly one rule
    and a non-repeating rule must not run out of responses; violations
    raise ScriptError naming the prompt role.
    """

    def __init__(self, rules: list[ScriptRule], strict: bool = True, default_response: str = ""):
        self.rules = rules
        self.strict = strict
        self.default_response = default_response

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptedProfile":
        rules = []
        for i, raw in enumerate(data.get("rules", [])):
            if "role" not in raw:
                raise ScriptError(f"rule {i} has no role")
            role = raw["role"]
            if role not in {r.value for r in PromptRole}:
                raise ScriptError(f"rule {i} has unknown role {role!r}")
            responses = raw.get("responses", [])
            if not isinstance(responses, list) or not responses:
                raise ScriptError(f"rule {i} ({role}) has no responses")
            for j, spec in enumerate(responses):
                _validate_response_spec(spec, f"rule {i} ({role}) response {j}")
            rules.append(
                ScriptRule(
                    role=role,
                    match=raw.get("match"),
                    responses=responses,
                    repeat=bool(raw.get("repeat", False)),
                )
            )
        return cls(rules, strict=bool(data.get("strict", True)),
                   default_response=data.get("default_response", ""))

    @classmethod
    def from_file(cls, path: "str | Path") -> "ScriptedProfile":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def complete(self, prompt: Prompt) -> str:
        hits = [rule for rule in self.rules if rule.matches(prompt)]
        if not hits:
            if self.strict:
                raise ScriptError(
                    f"no rule matches a {prompt.role.value} prompt; "
                    f"prompt starts: {prompt.text[:120]!r}"
                )
            return self.default_response
        if len(hits) > 1 and self.strict:
            raise ScriptError(
                f"{len(hits)} rules match a {prompt.role.value} prompt; "
                "make rule matchers disjoint"
            )
        rule = hits[0]
        if rule.consumed >= len(rule.responses):
            if not rule.repeat:
                raise ScriptError(
                    f"rule for {prompt.role.value} exhausted its {len(rule.responses)} responses"
                )
            spec = rule.responses[-1]
        else:
            spec = rule.responses[rule.consumed]
        rule.consumed += 1
        return _render_response(spec, prompt.text)


def _validate_response_spec(spec, where: str) -> None:
    if isinstance(spec, str):
        return
    if not isinstance(spec, dict):
        raise ScriptError(f"{where}: response must be a string or capture object")
    unknown = set(spec) - {"template", "captures", "rows"}
    if unknown:
        raise ScriptError(f"{where}: unknown response keys {sorted(unknown)}")
    if "template" not in spec:
        raise ScriptError(f"{where}: capture response needs a template")
    for name, pattern in (spec.get("captures") or {}).items():
        try:
            re.compile(pattern)
        except re.error as exc:
            raise ScriptError(f"{where}: bad capture pattern for {name!r}: {exc}") from None
    rows = spec.get("rows")
    if rows is not None:
        if "pattern" not in rows or "template" not in rows:
            raise ScriptError(f"{where}: rows spec needs pattern and template")
        try:
            re.compile(rows["pattern"])
        except re.error as exc:
            raise ScriptError(f"{where}: bad rows pattern: {exc}") from None


def _render_response(spec, prompt_text: str) -> str:
    if isinstance(spec, str):
        return spec
    mapping: dict[str, str] = {}
    for name, pattern in (spec.get("captures") or {}).items():
        m = re.search(pattern, prompt_text, re.DOTALL)
        if m is None:
            raise ScriptError(f"capture {name!r} found no match in the prompt")
        mapping[name] = m.group(1) if m.groups() else m.group(0)
    rows = spec.get("rows")
    if rows is not None:
        rendered = [
            m.expand(rows["template"])
            for m in re.finditer(rows["pattern"], prompt_text)
        ]
        joined = rows.get("join", ", ").join(rendered)
        mapping["rows"] = rows.get("prefix", "") + joined + rows.get("suffix", "")
    try:
        return string.Template(spec["template"]).substitute(mapping)
    except KeyError as exc:
        raise ScriptError(f"template references undefined capture {exc}") from None


# ---------------------------------------------------------------------------
# Transcript replay profile
# ---------------------------------------------------------------------------


class TranscriptProfile:
    """Serves a recorded transcript back, verifying prompts as it goes."""

    def __init__(self, entries: list[TranscriptEntry], verify_prompts: bool = True):
        self.entries = entries
        self.verify_prompts = verify_prompts
        self._cursor = 0

    @classmethod
    def from_dict(cls, data: dict, verify_prompts: bool = True) -> "TranscriptProfile":
        entries = [
            TranscriptEntry(
                index=raw["index"],
                role=raw["role"],
                prompt_text=raw["prompt"],
                response=raw["response"],
            )
            for raw in data.get("entries", [])
        ]
        return cls(entries, verify_prompts=verify_prompts)

    @classmethod
    def from_file(cls, path: "str | Path", verify_prompts: bool = True) -> "TranscriptProfile":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), verify_prompts=verify_prompts)

    def complete(self, prompt: Prompt) -> str:
        if self._cursor >= len(self.entries):
            raise ReplayDivergence(self._cursor, "<end of transcript>", prompt.text)
        entry = self.entries[self._cursor]
        if self.verify_prompts and entry.prompt_text != prompt.text:
            raise ReplayDivergence(entry.index, entry.prompt_text, prompt.text)
        self._cursor += 1
        return entry.response


# ---------------------------------------------------------------------------
# Remote profile
# ---------------------------------------------------------------------------


class RemoteProfile:
    """HTTP profile for a completion endpoint.

    Expects the endpoint to accept {"model", "messages"} and to return
    either {"completion": "..."} or an OpenAI-style choices list.
    """

    def __init__(
        self,
        endpoint: str,
        model: str = "default",
        api_key: str = "",
        timeout: float = 60.0,
        max_retries: int = 2,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries

    def complete(self, prompt: Prompt) -> str:
        import httpx

        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt.text}],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: "Exception | None" = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = httpx.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
                resp.raise_for_status()
                body = resp.json()
                if "completion" in body:
                    return str(body["completion"])
                return str(body["choices"][0]["message"]["content"])
            except Exception as exc:  # noqa: BLE001 - every failure maps to one error
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(min(2.0 ** attempt, 8.0))
        raise GatewayUnavailable(
            f"remote gateway failed after {self.max_retries + 1} attempts: {last_error}"
        )
