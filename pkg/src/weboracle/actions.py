"""Grounding and execution of natural-language actions.

An action phrase goes through a fixed pipeline: split into clauses, read
the intent (click, type, press, scroll, wait), ground target-taking
intents to a screen point, cut a square crop around that point, collect
interactable candidates inside the crop (doubling the crop once when it
comes up empty), pick one candidate, and emit an executable action. The
compiled plan for a page is cached by (page fingerprint, action phrase)
so replaying the same step costs no model calls.

Candidate selection is deterministic by default (best token match, ties
on element id). A gateway can be wired in to make the choice instead;
the grounder itself is pluggable, with a text-match implementation used
everywhere offline and a remote HTTP stub for real deployments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import WeboracleError
from .gateway import Prompt, PromptRole
from .trace import (
    Element,
    PageReidentifier,
    RawPage,
    Session,
    State,
    append_state,
    element_tokens,
    page_fingerprint,
    render_layout,
    tokens,
)

DEFAULT_CROP_RADIUS = 200.0
MATCH_THRESHOLD = 0.1


class GroundingError(WeboracleError):
    """No usable target for an action phrase."""


class ActionCompileError(WeboracleError):
    """The phrase does not compile to an executable action."""


class DriverFault(WeboracleError):
    """Base for faults raised by drivers during perform()."""


class ActionFailed(WeboracleError):
    """Applying an action failed (grounding, compile or driver fault)."""


class GroundingUnavailable(WeboracleError):
    """The configured grounding backend cannot serve predictions."""


class ActionType(str, Enum):
    CLICK = "click"
    TYPE = "type"
    PRESS = "press"
    SCROLL = "scroll"
    WAIT = "wait"


@dataclass
class ExecutableAction:
    action_type: ActionType
    target_id: str = ""
    text: str = ""
    key: str = ""
    dx: int = 0
    dy: int = 0
    wait_ms: int = 0

    def to_dict(self) -> dict:
        return {
            "type": self.action_type.value,
            "target_id": self.target_id,
            "text": self.text,
            "key": self.key,
            "dx": self.dx,
            "dy": self.dy,
            "wait_ms": self.wait_ms,
        }

    def describe(self) -> str:
        if self.action_type is ActionType.CLICK:
            return f"click #{self.target_id}"
        if self.action_type is ActionType.TYPE:
            return f"type {self.text!r} into #{self.target_id}"
        if self.action_type is ActionType.PRESS:
            return f"press {self.key}"
        if self.action_type is ActionType.SCROLL:
            return f"scroll ({self.dx},{self.dy})"
        return f"wait {self.wait_ms}ms"


@dataclass
class GroundingResult:
    coarse_point: tuple[float, float]
    crop_rect: tuple[float, float, float, float]
    candidate_ids: list[str]
    chosen_id: str
    doubled: bool = False
    selected_by: str = "rule"  # "rule", "gateway" or "single"


class Driver:
    """Contract every app backend implements."""

    def observe(self) -> RawPage:
        raise NotImplementedError

    def perform(self, action: ExecutableAction) -> RawPage:
        raise NotImplementedError

    def reset(self) -> RawPage:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Intent reading
# ---------------------------------------------------------------------------

_KEY_NAMES = {
    "enter": "Enter",
    "return": "Enter",
    "tab": "Tab",
    "escape": "Escape",
    "esc": "Escape",
    "space": "Space",
    "backspace": "Backspace",
    "delete": "Delete",
    "arrowup": "ArrowUp",
    "arrowdown": "ArrowDown",
    "arrowleft": "ArrowLeft",
    "arrowright": "ArrowRight",
}

_CLAUSE_SPLIT_RE = re.compile(r"\s*(?:;|\bthen\b|\band then\b)\s*", re.IGNORECASE)
_QUOTED_RE = re.compile(r"'([^']*)'|\"([^\"]*)\"")

_DESC_STOPWORDS = {
    "the", "a", "an", "on", "in", "into", "to", "at", "of", "for", "with",
    "click", "tap", "press", "select", "type", "enter", "fill", "input",
    "text", "then", "and",
}


@dataclass
class Intent:
    action_type: ActionType
    target_desc: str = ""
    text: str = ""
    key: str = ""
    dy: int = 0
    wait_ms: int = 0
    role_hint: "str | None" = None

    @property
    def needs_target(self) -> bool:
        return self.action_type in (ActionType.CLICK, ActionType.TYPE)


def split_clauses(action_nl: str) -> list[str]:
    clauses = [c.strip() for c in _CLAUSE_SPLIT_RE.split(action_nl)]
    return [c for c in clauses if c]


def read_intent(clause: str) -> Intent:
    """Map one clause to an intent. Unknown phrasings default to click."""

    lowered = clause.strip().lower()
    if not lowered:
        raise ActionCompileError("empty action clause")

    m = re.match(r"^(?:press|hit)\s+(?:the\s+)?([a-z]+)(?:\s+key)?$", lowered)
    if m and m.group(1) in _KEY_NAMES:
        return Intent(ActionType.PRESS, key=_KEY_NAMES[m.group(1)])

    m = re.match(r"^wait\s+(?:for\s+)?(\d+(?:\.\d+)?)\s*(?:s|sec|secs|seconds?)?$", lowered)
    if m:
        return Intent(ActionType.WAIT, wait_ms=int(float(m.group(1)) * 1000))

    m = re.match(r"^scroll\s+(down|up)(?:\s+(\d+))?", lowered)
    if m:
        amount = int(m.group(2)) if m.group(2) else 400
        return Intent(ActionType.SCROLL, dy=amount if m.group(1) == "down" else -amount)

    if re.match(r"^(?:type|enter|fill|input)\b", lowered):
        quoted = _QUOTED_RE.search(clause)
        if quoted is None:
            raise ActionCompileError(
                f"typing action needs quoted text: {clause!r}"
            )
        payload = quoted.group(1) if quoted.group(1) is not None else quoted.group(2)
        tail = clause[quoted.end():]
        m = re.search(r"\b(?:in|into|to)\b(.*)$", tail, re.IGNORECASE)
        desc = m.group(1).strip() if m else (clause[: quoted.start()] + tail).strip()
        return Intent(
            ActionType.TYPE,
            target_desc=_clean_desc(desc),
            text=payload,
            role_hint="input",
        )

    # click and synonyms; also the fallback for anything unrecognized
    desc = clause
    quoted = _QUOTED_RE.search(clause)
    if quoted is not None:
        label = quoted.group(1) if quoted.group(1) is not None else quoted.group(2)
        rest = clause[: quoted.start()] + " " + clause[quoted.end():]
        desc = label + " " + _clean_desc(rest)
    else:
        desc = _clean_desc(clause)
    if not desc.strip():
        raise ActionCompileError(f"cannot read a target from {clause!r}")
    return Intent(ActionType.CLICK, target_desc=desc.strip())


def _clean_desc(text: str) -> str:
    kept = [t for t in tokens(text) if t not in _DESC_STOPWORDS]
    return " ".join(kept)


# ---------------------------------------------------------------------------
# Grounders
# ---------------------------------------------------------------------------


class CoarseGrounder:
    """Predicts a screen point for an action description."""

    def predict(
        self, description: str, page: RawPage, role_hint: "str | None" = None
    ) -> tuple[float, float]:
        raise NotImplementedError


class TextMatchGrounder(CoarseGrounder):
    """Deterministic grounder: center of the best token-matching
    interactable element. Ties break on element id."""

    def predict(self, description, page, role_hint=None):
        best = self._best_element(description, page, role_hint)
        if best is None:
            raise GroundingError(f"no element matches {description!r}")
        return best.center()

    def _best_element(self, description, page, role_hint):
        want = set(tokens(description))
        if not want:
            return None
        pool = [el for el in page.root.walk() if el.interactable]
        if role_hint and any(el.role == role_hint for el in pool):
            pool = [el for el in pool if el.role == role_hint]
        scored = []
        desc_norm = " ".join(tokens(description))
        for el in pool:
            have = element_tokens(el)
            score = len(want & have) / len(want)
            if desc_norm and desc_norm == " ".join(tokens(el.text)):
                score += 0.5
            if score >= MATCH_THRESHOLD:
                scored.append((-score, el.element_id, el))
        if not scored:
            return None
        scored.sort(key=lambda item: (item[0], item[1]))
        return scored[0][2]


class RemoteGrounder(CoarseGrounder):
    """HTTP stub for a dedicated grounding model.

    POSTs {"action", "layout", "width", "height"} and expects
    {"x": float, "y": float}. Raises GroundingUnavailable without an
    endpoint or on transport failure.
    """

    def __init__(self, endpoint: str = "", timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def predict(self, description, page, role_hint=None):
        if not self.endpoint:
            raise GroundingUnavailable("remote grounder has no endpoint configured")
        import httpx

        try:
            resp = httpx.post(
                self.endpoint,
                json={
                    "action": description,
                    "layout": render_layout(page.root),
                    "width": page.width,
                    "height": page.height,
                },
                timeout=self.timeout,
            )
            resp.raise_for_status()
            body = resp.json()
            return float(body["x"]), float(body["y"])
        except Exception as exc:  # noqa: BLE001
            raise GroundingUnavailable(f"remote grounder failed: {exc}") from None


# ---------------------------------------------------------------------------
# Grounding pipeline
# ---------------------------------------------------------------------------


def _crop(point, radius, page) -> tuple[float, float, float, float]:
    x, y = point
    return (
        max(0.0, x - radius),
        max(0.0, y - radius),
        min(page.width, x + radius),
        min(page.height, y + radius),
    )


def _intersects(el: Element, rect) -> bool:
    x1, y1, x2, y2 = rect
    return not (el.xmax < x1 or el.xmin > x2 or el.ymax < y1 or el.ymin > y2)


def ground(
    description: str,
    page: RawPage,
    grounder: CoarseGrounder,
    gateway=None,
    crop_radius: float = DEFAULT_CROP_RADIUS,
    role_hint: "str | None" = None,
) -> GroundingResult:
    """Point prediction, square crop, candidate collection, selection."""

    point = grounder.predict(description, page, role_hint)
    radius = crop_radius
    doubled = False
    for round_no in (0, 1):
        rect = _crop(point, radius, page)
        candidates = [
            el for el in page.root.walk() if el.interactable and _intersects(el, rect)
        ]
        if candidates:
            break
        if round_no == 0:
            radius *= 2
            doubled = True
    if not candidates:
        raise GroundingError(
            f"no interactable element near {point} for {description!r}"
        )
    if role_hint and any(el.role == role_hint for el in candidates):
        candidates = [el for el in candidates if el.role == role_hint]
    candidate_ids = [el.element_id for el in candidates]
    if len(candidates) == 1:
        return GroundingResult(point, rect, candidate_ids, candidate_ids[0], doubled, "single")
    if gateway is not None:
        chosen = _select_with_gateway(description, candidates, rect, gateway)
        return GroundingResult(point, rect, candidate_ids, chosen, doubled, "gateway")
    chosen = _select_by_rule(description, candidates)
    return GroundingResult(point, rect, candidate_ids, chosen, doubled, "rule")


def _select_by_rule(description: str, candidates: list[Element]) -> str:
    want = set(tokens(description))
    desc_norm = " ".join(tokens(description))
    scored = []
    for el in candidates:
        have = element_tokens(el)
        score = len(want & have) / len(want) if want else 0.0
        if desc_norm and desc_norm == " ".join(tokens(el.text)):
            score += 0.5
        scored.append((-score, el.element_id))
    scored.sort()
    return scored[0][1]


def _select_with_gateway(description, candidates, rect, gateway) -> str:
    lines = [
        f"{i}. {el.role} #{el.element_id} {el.text!r} "
        f"({el.xmin:.0f},{el.ymin:.0f},{el.xmax:.0f},{el.ymax:.0f})"
        for i, el in enumerate(candidates, start=1)
    ]
    prompt = Prompt(
        role=PromptRole.SELECT_ACTION,
        parts=[
            "Pick the element the action refers to. Answer with the element id "
            "or the list number, nothing else.",
            f"Action: {description}",
            "Candidates inside the crop "
            f"({rect[0]:.0f},{rect[1]:.0f},{rect[2]:.0f},{rect[3]:.0f}):\n"
            + "\n".join(lines),
        ],
    )
    answer = gateway.complete(prompt).strip()
    by_id = {el.element_id: el for el in candidates}
    if answer in by_id:
        return answer
    if answer.lstrip("#") in by_id:
        return answer.lstrip("#")
    if answer.isdigit() and 1 <= int(answer) <= len(candidates):
        return candidates[int(answer) - 1].element_id
    raise GroundingError(f"selection response {answer!r} names no candidate")


# ---------------------------------------------------------------------------
# Compilation and execution
# ---------------------------------------------------------------------------


@dataclass
class PlannedAction:
    action: ExecutableAction
    grounding: "GroundingResult | None"
    clause: str


class ActionCache:
    """Memo of compiled plans keyed by (page fingerprint, action phrase)."""

    def __init__(self):
        self._plans: dict[tuple[str, str], list[PlannedAction]] = {}
        self.hits = 0
        self.misses = 0

    def get(self, key) -> "list[PlannedAction] | None":
        plan = self._plans.get(key)
        if plan is None:
            self.misses += 1
            return None
        self.hits += 1
        return plan

    def put(self, key, plan: list[PlannedAction]) -> None:
        self._plans[key] = plan


class ActionExecutor:
    def __init__(
        self,
        grounder: "CoarseGrounder | None" = None,
        gateway=None,
        select_with_gateway: bool = False,
        crop_radius: float = DEFAULT_CROP_RADIUS,
        cache: "ActionCache | None" = None,
    ):
        self.grounder = grounder or TextMatchGrounder()
        self.gateway = gateway
        self.select_with_gateway = select_with_gateway
        self.crop_radius = crop_radius
        self.cache = cache if cache is not None else ActionCache()

    def plan(self, action_nl: str, page: RawPage) -> list[PlannedAction]:
        """Compile a phrase into an ordered list of executable actions
        against the given page. Cached per (page, phrase)."""

        key = (page_fingerprint(page), action_nl)
        cached = self.cache.get(key)
        if cached is not None:
            return cached
        clauses = split_clauses(action_nl)
        if not clauses:
            raise ActionCompileError(f"no actionable clause in {action_nl!r}")
        plan: list[PlannedAction] = []
        for clause in clauses:
            intent = read_intent(clause)
            if intent.needs_target:
                grounding = ground(
                    intent.target_desc,
                    page,
                    self.grounder,
                    gateway=self.gateway if self.select_with_gateway else None,
                    crop_radius=self.crop_radius,
                    role_hint=intent.role_hint,
                )
                action = self._compile(intent, grounding.chosen_id, clause)
                plan.append(PlannedAction(action, grounding, clause))
            else:
                plan.append(PlannedAction(self._compile(intent, "", clause), None, clause))
        self.cache.put(key, plan)
        return plan

    def _compile(self, intent: Intent, target_id: str, clause: str) -> ExecutableAction:
        if intent.action_type is ActionType.CLICK:
            if not target_id:
                raise ActionCompileError(f"click without a target: {clause!r}")
            return ExecutableAction(ActionType.CLICK, target_id=target_id)
        if intent.action_type is ActionType.TYPE:
            if not intent.text:
                raise ActionCompileError(f"typing without text: {clause!r}")
            if not target_id:
                raise ActionCompileError(f"typing without a target: {clause!r}")
            return ExecutableAction(ActionType.TYPE, target_id=target_id, text=intent.text)
        if intent.action_type is ActionType.PRESS:
            return ExecutableAction(ActionType.PRESS, key=intent.key)
        if intent.action_type is ActionType.SCROLL:
            return ExecutableAction(ActionType.SCROLL, dy=intent.dy)
        return ExecutableAction(ActionType.WAIT, wait_ms=intent.wait_ms)


def apply_action(
    driver: Driver,
    action: ExecutableAction,
    session: Session,
    reidentifier: PageReidentifier,
) -> State:
    """Perform one action and append the resulting observation."""

    try:
        raw = driver.perform(action)
    except DriverFault as exc:
        raise ActionFailed(f"driver rejected {action.describe()}: {exc}") from exc
    return append_state(session, raw, reidentifier)
