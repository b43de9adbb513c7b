"""Symbolized GUI state: elements, states, sessions, page identity.

A session is the growing trace of an episode: state 0 is the page right
after reset, each performed action appends one more state. States carry a
page identity (p0, p1, ...) so assertions can talk about revisits, a plain
text rendering used in prompts, and an extraction cache.

Page identity is decided per new observation: the layout fingerprint of
the incoming page is compared (cosine over a bag of (role, text-token)
pairs) against the latest state of each known page id. Close matches are
confirmed by the model gateway when one is wired in; without a gateway
only near-identical layouts (>= strict threshold) are treated as the same
page.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import WeboracleError
from .schemas import (
    SchemaDecl,
    SchemaRegistry,
    SchemaValidationError,
    SymbolInstance,
    validate,
)

LAYOUT_THRESHOLD = 0.5     # consult the gateway at or above this similarity
STRICT_THRESHOLD = 0.95    # reuse a page id without a gateway at or above this
FIND_THRESHOLD = 0.1       # minimum token-overlap score for find()

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class TreeValidationError(WeboracleError):
    """The element tree is malformed (ids, links or boxes)."""


class ExtractionError(WeboracleError):
    """Symbol extraction produced no usable value."""


# ---------------------------------------------------------------------------
# Elements and pages
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Element:
    """One GUI element. Box coordinates are page pixels, x grows right and
    y grows down; (xmin, ymin) is the top-left corner."""

    element_id: str
    role: str
    text: str = ""
    xmin: float = 0.0
    ymin: float = 0.0
    xmax: float = 0.0
    ymax: float = 0.0
    interactable: bool = False
    attributes: dict[str, str] = field(default_factory=dict)
    parent: "Element | None" = None
    children: list["Element"] = field(default_factory=list)

    def center(self) -> tuple[float, float]:
        return ((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)

    def walk(self):
        """Preorder traversal including self."""
        yield self
        for child in self.children:
            yield from child.walk()

    def __repr__(self) -> str:
        return f"<{self.role} #{self.element_id} {self.text!r}>"


def element(
    element_id: str,
    role: str,
    text: str = "",
    box: tuple[float, float, float, float] = (0, 0, 0, 0),
    interactable: bool = False,
    attributes: "dict[str, str] | None" = None,
    children: "list[Element] | None" = None,
) -> Element:
    """Build an element and link its children."""

    node = Element(
        element_id=element_id,
        role=role,
        text=text,
        xmin=float(box[0]),
        ymin=float(box[1]),
        xmax=float(box[2]),
        ymax=float(box[3]),
        interactable=interactable,
        attributes=dict(attributes or {}),
    )
    for child in children or []:
        child.parent = node
        node.children.append(child)
    return node


@dataclass
class RawPage:
    """A driver observation before it joins the trace."""

    root: Element
    width: float
    height: float
    url: str = ""
    screenshot_ref: str = ""


def validate_tree(root: Element) -> None:
    """Reject duplicate ids, broken parent links and inverted boxes."""

    seen: set[str] = set()
    for node in root.walk():
        if not node.element_id:
            raise TreeValidationError("element with empty id")
        if node.element_id in seen:
            raise TreeValidationError(f"duplicate element id {node.element_id!r}")
        seen.add(node.element_id)
        if node.xmin > node.xmax or node.ymin > node.ymax:
            raise TreeValidationError(f"element {node.element_id!r} has an inverted box")
        for child in node.children:
            if child.parent is not node:
                raise TreeValidationError(
                    f"element {child.element_id!r} has a broken parent link"
                )


# ---------------------------------------------------------------------------
# Tokens and fingerprints
# ---------------------------------------------------------------------------


def tokens(text: str) -> list[str]:
    """Lowercased alphanumeric runs."""

    return _TOKEN_RE.findall(text.lower())


def element_tokens(node: Element) -> set[str]:
    """Tokens an element is findable by: text, role and attribute values."""

    out = set(tokens(node.text))
    out.update(tokens(node.role))
    for value in node.attributes.values():
        out.update(tokens(value))
    return out


def layout_fingerprint(root: Element) -> Counter:
    """Bag of (role, token) pairs over the whole tree. Elements without
    text still contribute a (role, "") pair so bare structure counts."""

    bag: Counter = Counter()
    for node in root.walk():
        toks = tokens(node.text)
        if toks:
            for tok in toks:
                bag[(node.role, tok)] += 1
        else:
            bag[(node.role, "")] += 1
    return bag


def cosine_similarity(a: Counter, b: Counter) -> float:
    if not a or not b:
        return 0.0
    dot = sum(count * b.get(key, 0) for key, count in a.items())
    norm_a = math.sqrt(sum(c * c for c in a.values()))
    norm_b = math.sqrt(sum(c * c for c in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


# ---------------------------------------------------------------------------
# States and sessions
# ---------------------------------------------------------------------------


@dataclass
class StateText:
    """Plain text view of a state, used verbatim in prompts."""

    page_id: str
    summary: str
    layout: str

    def full_text(self) -> str:
        return f"{self.summary}\n{self.layout}"


@dataclass(eq=False)
class State:
    step_index: int
    page_id: str
    summary: str
    url: str
    root: Element
    elements: list[Element]
    screenshot_ref: str = ""
    text: "StateText | None" = None
    extract_cache: dict = field(default_factory=dict)

    def find(self, description: str, top_k: int = 5) -> list[Element]:
        """Rank elements by token overlap with the description.

        Score is |D & E| / |D| over description tokens D and element tokens
        E; elements below the find threshold are dropped. Ties break on the
        element id so insertion order never matters.
        """

        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        want = set(tokens(description))
        if not want:
            return []
        scored: list[tuple[float, str, Element]] = []
        for node in self.elements:
            have = element_tokens(node)
            score = len(want & have) / len(want)
            if score >= FIND_THRESHOLD:
                scored.append((-score, node.element_id, node))
        scored.sort(key=lambda item: (item[0], item[1]))
        return [node for _, _, node in scored[:top_k]]

    def get_element(self, element_id: str) -> "Element | None":
        for node in self.elements:
            if node.element_id == element_id:
                return node
        return None

    def __repr__(self) -> str:
        return f"<State {self.step_index} page={self.page_id} url={self.url!r}>"


@dataclass
class Session:
    history: list[State] = field(default_factory=list)
    page_ids_issued: int = 0
    reident_log: list["ReidentDecision"] = field(default_factory=list)

    @property
    def state(self) -> State:
        if not self.history:
            raise WeboracleError("session has no states yet")
        return self.history[-1]

    def fresh_page_id(self) -> str:
        pid = f"p{self.page_ids_issued}"
        self.page_ids_issued += 1
        return pid

    def known_pages(self) -> dict[str, State]:
        """Latest state per page id, in first-seen order."""

        latest: dict[str, State] = {}
        for st in self.history:
            latest[st.page_id] = st
        return latest


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _fmt_num(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _render_element_line(node: Element, depth: int) -> str:
    parts = [
        "  " * depth + f"- {node.role} #{node.element_id} {json.dumps(node.text)}",
        f"({_fmt_num(node.xmin)},{_fmt_num(node.ymin)},{_fmt_num(node.xmax)},{_fmt_num(node.ymax)})",
    ]
    if node.interactable:
        parts.append("[x]")
    for key in sorted(node.attributes):
        parts.append(f"{key}={node.attributes[key]}")
    return " ".join(parts)


def render_layout(root: Element) -> str:
    lines: list[str] = []

    def visit(node: Element, depth: int) -> None:
        lines.append(_render_element_line(node, depth))
        for child in node.children:
            visit(child, depth + 1)

    visit(root, 0)
    return "\n".join(lines)


def render_state_text(state: State) -> StateText:
    summary = (
        f"[page {state.page_id}] step={state.step_index} "
        f"url={state.url or '-'} summary={json.dumps(state.summary)}"
    )
    return StateText(page_id=state.page_id, summary=summary, layout=render_layout(state.root))


def render_trace(session: Session) -> str:
    """The whole trace as prompt text, oldest state first."""

    chunks = []
    for st in session.history:
        if st.text is None:
            st.text = render_state_text(st)
        chunks.append(st.text.full_text())
    return "\n\n".join(chunks)


def derive_summary(raw: RawPage) -> str:
    title = raw.root.attributes.get("title", "")
    if title:
        return title
    for node in raw.root.walk():
        if node.role in ("heading", "title") and node.text:
            return node.text
    return raw.url or raw.root.element_id


def page_fingerprint(raw: RawPage) -> str:
    """Content hash of an observation: url plus the full layout rendering."""

    import hashlib

    digest = hashlib.sha256()
    digest.update(raw.url.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(render_layout(raw.root).encode("utf-8"))
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Page reidentification
# ---------------------------------------------------------------------------


@dataclass
class ReidentDecision:
    page_id: str
    fresh: bool
    best_similarity: float
    matched_page_id: "str | None"
    consulted: bool
    response: "str | None" = None


class PageReidentifier:
    """Assigns page ids to incoming observations.

    With a gateway, any candidate at or above the layout threshold is put
    to the model ("same" reuses the id); without one, only matches at or
    above the strict threshold are reused.
    """

    def __init__(
        self,
        gateway=None,
        layout_threshold: float = LAYOUT_THRESHOLD,
        strict_threshold: float = STRICT_THRESHOLD,
    ):
        if not (0.0 <= layout_threshold <= 1.0 and 0.0 <= strict_threshold <= 1.0):
            raise ValueError("thresholds must be within [0, 1]")
        self.gateway = gateway
        self.layout_threshold = layout_threshold
        self.strict_threshold = strict_threshold

    def decide(self, session: Session, raw: RawPage) -> ReidentDecision:
        candidate = layout_fingerprint(raw.root)
        best_sim = 0.0
        best_pid: "str | None" = None
        best_state: "State | None" = None
        for pid, st in session.known_pages().items():
            sim = cosine_similarity(candidate, layout_fingerprint(st.root))
            if sim > best_sim or (sim == best_sim and best_pid is None):
                best_sim, best_pid, best_state = sim, pid, st
        if best_pid is not None and best_sim >= self.layout_threshold:
            if self.gateway is not None:
                response = self._consult(best_state, raw)
                if response.strip().lower().startswith("same"):
                    return ReidentDecision(best_pid, False, best_sim, best_pid, True, response)
                return ReidentDecision(
                    session.fresh_page_id(), True, best_sim, best_pid, True, response
                )
            if best_sim >= self.strict_threshold:
                return ReidentDecision(best_pid, False, best_sim, best_pid, False)
        return ReidentDecision(session.fresh_page_id(), True, best_sim, best_pid, False)

    def _consult(self, known_state: State, raw: RawPage) -> str:
        from .gateway import Prompt, PromptRole

        if known_state.text is None:
            known_state.text = render_state_text(known_state)
        candidate_layout = render_layout(raw.root)
        prompt = Prompt(
            role=PromptRole.REIDENTIFY_PAGE,
            parts=[
                "Decide whether the two page renderings below show the same page "
                "of the application, possibly with different content. Answer with "
                "exactly one word: 'same' or 'different'.",
                "Known page:\n" + known_state.text.full_text(),
                "New observation:\n" + candidate_layout,
            ],
        )
        return self.gateway.complete(prompt)


def append_state(session: Session, raw: RawPage, reidentifier: PageReidentifier) -> State:
    """Validate an observation, settle its page id and add it to the trace."""

    validate_tree(raw.root)
    decision = reidentifier.decide(session, raw)
    session.reident_log.append(decision)
    state = State(
        step_index=len(session.history),
        page_id=decision.page_id,
        summary=derive_summary(raw),
        url=raw.url,
        root=raw.root,
        elements=list(raw.root.walk()),
        screenshot_ref=raw.screenshot_ref,
    )
    state.text = render_state_text(state)
    session.history.append(state)
    return state


# ---------------------------------------------------------------------------
# Symbol extraction
# ---------------------------------------------------------------------------


def _scope_rendering(scope) -> str:
    if isinstance(scope, State):
        if scope.text is None:
            scope.text = render_state_text(scope)
        return scope.text.full_text()
    if isinstance(scope, Element):
        return render_layout(scope)
    raise TypeError(f"extraction scope must be a State or Element, got {type(scope).__name__}")


def _scope_cache(scope) -> dict:
    if isinstance(scope, State):
        return scope.extract_cache
    cache = getattr(scope, "_extract_cache", None)
    if cache is None:
        cache = {}
        scope._extract_cache = cache
    return cache


def _strip_fences(text: str) -> str:
    stripped = text.strip()
    if stripped.startswith("```"):
        stripped = re.sub(r"^```[a-zA-Z]*\n?", "", stripped)
        stripped = re.sub(r"\n?```$", "", stripped.strip())
    return stripped


def extract(
    scope,
    instruction: str,
    schema: SchemaDecl,
    gateway,
    registry: "SchemaRegistry | None" = None,
) -> SymbolInstance:
    """Pull a typed value out of a state or element via the gateway.

    The completion must be a JSON object (code fences tolerated) that
    validates against the schema. Results are cached per scope by
    (instruction, schema name) so repeated evaluation is stable and only
    one gateway call is made per key.
    """

    from .gateway import Prompt, PromptRole

    cache = _scope_cache(scope)
    key = (instruction, schema.name)
    if key in cache:
        return cache[key]
    prompt = Prompt(
        role=PromptRole.EXTRACT_SYMBOL,
        parts=[
            "Extract the requested value from the page rendering below. "
            "Respond with a single JSON object matching the schema.",
            _scope_rendering(scope),
            f"Instruction: {instruction}",
            "Schema:\n" + schema.to_text(),
        ],
    )
    response = gateway.complete(prompt)
    try:
        data = json.loads(_strip_fences(response))
    except json.JSONDecodeError as exc:
        raise ExtractionError(
            f"extraction for {instruction!r} returned invalid JSON: {exc}"
        ) from None
    try:
        instance = validate(schema, data, registry)
    except SchemaValidationError as exc:
        raise ExtractionError(f"extraction for {instruction!r} failed validation: {exc}") from None
    cache[key] = instance
    return instance


# ---------------------------------------------------------------------------
# Trace serialization
# ---------------------------------------------------------------------------


def _element_to_dict(node: Element) -> dict:
    return {
        "id": node.element_id,
        "role": node.role,
        "text": node.text,
        "box": [node.xmin, node.ymin, node.xmax, node.ymax],
        "interactable": node.interactable,
        "attributes": {k: node.attributes[k] for k in sorted(node.attributes)},
        "parent": node.parent.element_id if node.parent is not None else None,
    }


def trace_to_dict(session: Session) -> dict:
    """Serializable trace: ordered states, fixed field order, no clocks."""

    states = []
    for st in session.history:
        if st.text is None:
            st.text = render_state_text(st)
        states.append(
            {
                "step_index": st.step_index,
                "page_id": st.page_id,
                "url": st.url,
                "summary": st.summary,
                "layout": st.text.layout,
                "elements": [_element_to_dict(node) for node in st.elements],
            }
        )
    return {"states": states}


def trace_from_dict(data: dict) -> Session:
    """Rebuild a session from its serialized trace."""

    session = Session()
    max_pid = -1
    for raw_state in data.get("states", []):
        by_id: dict[str, Element] = {}
        root: "Element | None" = None
        for raw_el in raw_state["elements"]:
            node = Element(
                element_id=raw_el["id"],
                role=raw_el["role"],
                text=raw_el["text"],
                xmin=float(raw_el["box"][0]),
                ymin=float(raw_el["box"][1]),
                xmax=float(raw_el["box"][2]),
                ymax=float(raw_el["box"][3]),
                interactable=bool(raw_el["interactable"]),
                attributes=dict(raw_el["attributes"]),
            )
            parent_id = raw_el["parent"]
            if parent_id is None:
                if root is not None:
                    raise TreeValidationError("trace state has two roots")
                root = node
            else:
                parent = by_id.get(parent_id)
                if parent is None:
                    raise TreeValidationError(
                        f"element {node.element_id!r} appears before its parent {parent_id!r}"
                    )
                node.parent = parent
                parent.children.append(node)
            by_id[node.element_id] = node
        if root is None:
            raise TreeValidationError("trace state has no root element")
        validate_tree(root)
        state = State(
            step_index=int(raw_state["step_index"]),
            page_id=raw_state["page_id"],
            summary=raw_state["summary"],
            url=raw_state["url"],
            root=root,
            elements=list(root.walk()),
        )
        state.text = render_state_text(state)
        session.history.append(state)
        pid = raw_state["page_id"]
        if re.fullmatch(r"p(\d+)", pid):
            max_pid = max(max_pid, int(pid[1:]))
    session.page_ids_issued = max_pid + 1
    return session
