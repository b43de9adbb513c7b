"""Simulated web applications, declared as JSON documents.

An app definition names pages and stores. Pages are element-tree
templates; node text and attributes may interpolate store paths
("{cart.subtotal:.2f}"), list-valued stores expand through repeat nodes,
and nodes can be conditional on store contents. Transitions map
(page, action) pairs to effects that mutate stores and navigate; the
first matching rule wins, and performing an action with no matching rule
or a target that is not on the page raises a driver fault rather than
silently doing nothing.

Bug injection wraps a driver: a trigger decides when the bug fires and a
payload describes what it does. Categories: missing_element (elements
vanish from matching pages), data_inconsistency (stores are corrupted at
a transition), noop_action (a matching action is swallowed) and
navigation_failure (a transition lands on the wrong page).
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from importlib import resources
from pathlib import Path

from .actions import ActionType, Driver, DriverFault, ExecutableAction
from .errors import WeboracleError
from .trace import Element, RawPage, element, page_fingerprint, validate_tree

BUG_CATEGORIES = (
    "missing_element",
    "data_inconsistency",
    "noop_action",
    "navigation_failure",
)


class AppDefinitionError(WeboracleError):
    """The app JSON is malformed; the message names the offending path."""


class SimAppError(WeboracleError):
    """A runtime problem inside the simulated app (bad store path etc.)."""


class InvalidTargetFault(DriverFault):
    """The action names an element that is not on the current page."""


class NoTransitionFault(DriverFault):
    """No transition rule matches the action."""


class BugSpecError(WeboracleError):
    """The bug description is malformed."""


# ---------------------------------------------------------------------------
# Definition model
# ---------------------------------------------------------------------------


@dataclass
class PageDef:
    name: str
    url: str
    title: str
    width: float
    height: float
    nodes: list  # raw template nodes


@dataclass
class TransitionRule:
    page: str
    action_type: str
    target: str  # element id glob; "*" matches anything including no target
    param: "str | None"  # regex over typed text or pressed key
    effects: list


@dataclass
class AppDefinition:
    name: str
    start_page: str
    stores: dict
    pages: dict[str, PageDef]
    transitions: list[TransitionRule]
    lint_warnings: list[str] = field(default_factory=list)


def load_app(ref: "str | Path") -> AppDefinition:
    """Load an app by path or by bundled name ("builtin:minishop")."""

    text = None
    source = str(ref)
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        try:
            text = (
                resources.files("weboracle").joinpath(f"apps/{name}.json").read_text("utf-8")
            )
        except FileNotFoundError:
            raise AppDefinitionError(f"no bundled app named {name!r}") from None
    else:
        path = Path(source)
        if not path.exists():
            raise AppDefinitionError(f"app definition not found: {source}")
        text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AppDefinitionError(f"{source}: invalid JSON at line {exc.lineno}: {exc.msg}")
    return parse_app(data, source)


def parse_app(data: dict, source: str = "<dict>") -> AppDefinition:
    def bad(path, msg):
        raise AppDefinitionError(f"{source}: {path}: {msg}")

    if not isinstance(data, dict):
        bad("$", "app definition must be an object")
    name = data.get("name")
    if not isinstance(name, str) or not name:
        bad("name", "missing app name")
    start = data.get("start_page")
    pages_raw = data.get("pages")
    if not isinstance(pages_raw, dict) or not pages_raw:
        bad("pages", "at least one page is required")
    if start not in pages_raw:
        bad("start_page", f"start page {start!r} is not declared")
    stores = data.get("stores", {})
    if not isinstance(stores, dict):
        bad("stores", "stores must be an object")

    pages: dict[str, PageDef] = {}
    for pname, praw in pages_raw.items():
        where = f"pages.{pname}"
        if not isinstance(praw, dict):
            bad(where, "page must be an object")
        nodes = praw.get("elements")
        if not isinstance(nodes, list) or not nodes:
            bad(where + ".elements", "page needs an element list")
        for i, node in enumerate(nodes):
            _check_node(node, f"{where}.elements[{i}]", bad)
        pages[pname] = PageDef(
            name=pname,
            url=str(praw.get("url", f"/{pname}")),
            title=str(praw.get("title", pname)),
            width=float(praw.get("width", 1280)),
            height=float(praw.get("height", 720)),
            nodes=nodes,
        )

    transitions: list[TransitionRule] = []
    for i, traw in enumerate(data.get("transitions", [])):
        where = f"transitions[{i}]"
        if not isinstance(traw, dict):
            bad(where, "transition must be an object")
        page = traw.get("page")
        if page not in pages:
            bad(where + ".page", f"unknown page {page!r}")
        action = traw.get("action", {})
        atype = action.get("type")
        if atype not in {a.value for a in ActionType}:
            bad(where + ".action.type", f"unknown action type {atype!r}")
        effects = traw.get("effects", [])
        if not isinstance(effects, list):
            bad(where + ".effects", "effects must be a list")
        for j, effect in enumerate(effects):
            _check_effect(effect, f"{where}.effects[{j}]", pages, bad)
        transitions.append(
            TransitionRule(
                page=page,
                action_type=atype,
                target=str(action.get("target", "*")),
                param=action.get("param"),
                effects=effects,
            )
        )

    warnings = _lint(transitions)
    return AppDefinition(
        name=name,
        start_page=start,
        stores=stores,
        pages=pages,
        transitions=transitions,
        lint_warnings=warnings,
    )


_NODE_KEYS = {"id", "role", "text", "box", "interactable", "attrs", "children", "when", "repeat"}


def _check_node(node, where, bad):
    if not isinstance(node, dict):
        bad(where, "element must be an object")
    unknown = set(node) - _NODE_KEYS
    if unknown:
        bad(where, f"unknown keys {sorted(unknown)}")
    if "repeat" in node:
        rep = node["repeat"]
        for key in ("over", "as"):
            if key not in rep:
                bad(where + ".repeat", f"missing {key!r}")
    if "id" not in node:
        bad(where, "element needs an id")
    box = node.get("box")
    if box is not None and (not isinstance(box, list) or len(box) != 4):
        bad(where + ".box", "box must be [xmin, ymin, xmax, ymax]")
    for i, child in enumerate(node.get("children", [])):
        _check_node(child, f"{where}.children[{i}]", bad)


_EFFECT_KEYS = {
    "navigate",
    "set",
    "append",
    "lookup_into",
    "filter_into",
    "sum_into",
    "update_where",
    "set_element",
}


def _check_effect(effect, where, pages, bad):
    if not isinstance(effect, dict) or len(effect) != 1:
        bad(where, "effect must be an object with exactly one key")
    key = next(iter(effect))
    if key not in _EFFECT_KEYS:
        bad(where, f"unknown effect {key!r}")
    if key == "navigate" and effect[key] not in pages:
        bad(where, f"navigate to unknown page {effect[key]!r}")


def _lint(transitions: list[TransitionRule]) -> list[str]:
    seen: dict[tuple, int] = {}
    warnings = []
    for i, rule in enumerate(transitions):
        key = (rule.page, rule.action_type, rule.target, rule.param)
        if key in seen:
            warnings.append(
                f"transitions[{i}] duplicates transitions[{seen[key]}] "
                f"({rule.page}/{rule.action_type}/{rule.target}); the first one wins"
            )
        else:
            seen[key] = i
    return warnings


# ---------------------------------------------------------------------------
# Interpolation
# ---------------------------------------------------------------------------

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_.]*)(?::([^}]*))?\}")


def _resolve_path(path: str, ctx: dict):
    node = ctx
    for part in path.split("."):
        if isinstance(node, dict) and part in node:
            node = node[part]
        else:
            raise SimAppError(f"unknown store path {path!r}")
    return node


def _interpolate(template, ctx: dict):
    """Fill {path} placeholders. A template that is one bare placeholder
    returns the native value so numbers stay numbers."""

    if isinstance(template, dict):
        return {k: _interpolate(v, ctx) for k, v in template.items()}
    if isinstance(template, list):
        return [_interpolate(v, ctx) for v in template]
    if not isinstance(template, str):
        return template
    whole = _PLACEHOLDER_RE.fullmatch(template)
    if whole and whole.group(2) is None:
        return _resolve_path(whole.group(1), ctx)

    def fill(m):
        value = _resolve_path(m.group(1), ctx)
        spec = m.group(2)
        if spec:
            try:
                return format(value, spec)
            except (ValueError, TypeError) as exc:
                raise SimAppError(f"bad format {spec!r} for {m.group(1)}: {exc}") from None
        return str(value)

    return _PLACEHOLDER_RE.sub(fill, template)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _when_holds(cond: dict, ctx: dict) -> bool:
    value = _resolve_path(cond["path"], ctx)
    if "is" in cond:
        if cond["is"] == "empty":
            return not value
        if cond["is"] == "nonempty":
            return bool(value)
        raise SimAppError(f"unknown condition {cond['is']!r}")
    if "equals" in cond:
        return value == _interpolate(cond["equals"], ctx)
    raise SimAppError("condition needs 'is' or 'equals'")


def _shift(el: Element, dy: float) -> None:
    el.ymin += dy
    el.ymax += dy
    for child in el.children:
        _shift(child, dy)


def _render_node(node: dict, ctx: dict) -> list[Element]:
    if "when" in node and not _when_holds(node["when"], ctx):
        return []
    if "repeat" in node:
        rep = node["repeat"]
        items = _resolve_path(rep["over"], ctx)
        if not isinstance(items, list):
            raise SimAppError(f"repeat over non-list path {rep['over']!r}")
        out = []
        dy = float(rep.get("dy", 0))
        template = {k: v for k, v in node.items() if k != "repeat"}
        for i, item in enumerate(items):
            child_ctx = dict(ctx)
            child_ctx[rep["as"]] = item
            child_ctx["i"] = i
            for rendered in _render_node(template, child_ctx):
                _shift(rendered, dy * i)
                out.append(rendered)
        return out
    attrs = {
        str(k): str(_interpolate(v, ctx)) for k, v in (node.get("attrs") or {}).items()
    }
    box = node.get("box", [0, 0, 0, 0])
    children: list[Element] = []
    for sub in node.get("children", []):
        children.extend(_render_node(sub, ctx))
    rendered_id = str(_interpolate(node["id"], ctx))
    return [
        element(
            rendered_id,
            str(node.get("role", "container")),
            str(_interpolate(node.get("text", ""), ctx)),
            tuple(float(v) for v in box),
            bool(node.get("interactable", False)),
            attrs,
            children,
        )
    ]


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


class SimDriver(Driver):
    def __init__(self, definition: AppDefinition):
        self.definition = definition
        self.current_page = definition.start_page
        self.stores: dict = {}
        self.overrides: dict[tuple[str, str], dict] = {}
        self.step_count = 0
        self.reset()

    def reset(self) -> RawPage:
        self.stores = copy.deepcopy(self.definition.stores)
        self.current_page = self.definition.start_page
        self.overrides = {}
        self.step_count = 0
        return self.observe()

    def observe(self) -> RawPage:
        return self._render(self.current_page)

    def _render(self, page_name: str) -> RawPage:
        page = self.definition.pages[page_name]
        ctx = dict(self.stores)
        children: list[Element] = []
        for node in page.nodes:
            children.extend(_render_node(node, ctx))
        root = element(
            "root",
            "page",
            "",
            (0, 0, page.width, page.height),
            False,
            {"title": page.title},
            children,
        )
        self._apply_overrides(page_name, root)
        validate_tree(root)
        return RawPage(root=root, width=page.width, height=page.height, url=page.url)

    def _apply_overrides(self, page_name: str, root: Element) -> None:
        for (page_glob, target), props in self.overrides.items():
            if not fnmatchcase(page_name, page_glob):
                continue
            for node in root.walk():
                if fnmatchcase(node.element_id, target):
                    for prop, value in props.items():
                        if prop == "text":
                            node.text = str(value)
                        elif prop.startswith("attr:"):
                            node.attributes[prop.split(":", 1)[1]] = str(value)

    def perform(self, action: ExecutableAction) -> RawPage:
        self.step_count += 1
        if action.action_type in (ActionType.WAIT, ActionType.SCROLL):
            return self.observe()
        target_el = None
        if action.target_id:
            page = self.observe()
            for node in page.root.walk():
                if node.element_id == action.target_id:
                    target_el = node
                    break
            if target_el is None:
                raise InvalidTargetFault(
                    f"element {action.target_id!r} is not on page {self.current_page!r}"
                )
        rule = self._match_rule(action)
        if rule is None:
            raise NoTransitionFault(
                f"no transition for {action.describe()} on page {self.current_page!r}"
            )
        ctx = dict(self.stores)
        ctx["param"] = {"text": action.text, "key": action.key}
        ctx["target"] = {
            "id": target_el.element_id if target_el else "",
            "text": target_el.text if target_el else "",
            "attrs": dict(target_el.attributes) if target_el else {},
        }
        for effect in rule.effects:
            self._apply_effect(effect, ctx)
            ctx.update(self.stores)
        return self.observe()

    def _match_rule(self, action: ExecutableAction) -> "TransitionRule | None":
        for rule in self.definition.transitions:
            if rule.page != self.current_page:
                continue
            if rule.action_type != action.action_type.value:
                continue
            if rule.target != "*" and not fnmatchcase(action.target_id, rule.target):
                continue
            if rule.param is not None:
                param = action.text if action.action_type is ActionType.TYPE else action.key
                if re.fullmatch(rule.param, param) is None:
                    continue
            return rule
        return None

    def _apply_effect(self, effect: dict, ctx: dict) -> None:
        key = next(iter(effect))
        body = effect[key]
        if key == "navigate":
            self.current_page = body
            return
        if key == "set":
            self._store_set(body["path"], _interpolate(body["value"], ctx))
            return
        if key == "append":
            target = _resolve_path(body["path"], self.stores)
            if not isinstance(target, list):
                raise SimAppError(f"append to non-list path {body['path']!r}")
            target.append(_interpolate(body["value"], ctx))
            return
        if key == "lookup_into":
            source = _resolve_path(body["from"], self.stores)
            needle = _interpolate(body["equals"], ctx)
            for item in source:
                if item.get(body["field"]) == needle:
                    self._store_set(body["path"], copy.deepcopy(item))
                    return
            raise SimAppError(
                f"lookup_into found no {body['field']}={needle!r} in {body['from']!r}"
            )
        if key == "filter_into":
            source = _resolve_path(body["from"], self.stores)
            needle = str(_interpolate(body["contains"], ctx)).lower()
            kept = [
                copy.deepcopy(item)
                for item in source
                if needle in str(item.get(body["field"], "")).lower()
            ]
            self._store_set(body["path"], kept)
            return
        if key == "sum_into":
            source = _resolve_path(body["over"], self.stores)
            if "multiply" in body:
                f1, f2 = body["multiply"]
                total = sum(item[f1] * item[f2] for item in source)
            else:
                total = sum(item[body["field"]] for item in source)
            self._store_set(body["path"], total)
            return
        if key == "update_where":
            source = _resolve_path(body["path"], self.stores)
            needle = _interpolate(body["equals"], ctx)
            for item in source:
                if item.get(body["field"]) == needle:
                    item[body["set_field"]] = _interpolate(body["value"], ctx)
            return
        if key == "set_element":
            page = body.get("page", self.current_page)
            slot = self.overrides.setdefault((page, body["target"]), {})
            slot[body["property"]] = _interpolate(body["value"], ctx)
            return
        raise SimAppError(f"unknown effect {key!r}")  # pragma: no cover - load-checked

    def _store_set(self, path: str, value) -> None:
        parts = path.split(".")
        node = self.stores
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise SimAppError(f"unknown store path {path!r}")
            node = node[part]
        if not isinstance(node, dict):
            raise SimAppError(f"unknown store path {path!r}")
        node[parts[-1]] = value


def fingerprint(page: RawPage) -> str:
    return page_fingerprint(page)


# ---------------------------------------------------------------------------
# Bug injection
# ---------------------------------------------------------------------------


@dataclass
class BugSpec:
    category: str
    trigger: dict
    payload: dict
    expected_step: "int | None" = None

    @classmethod
    def from_dict(cls, data: dict) -> "BugSpec":
        category = data.get("category")
        if category not in BUG_CATEGORIES:
            raise BugSpecError(
                f"unknown bug category {category!r}; expected one of {BUG_CATEGORIES}"
            )
        trigger = data.get("trigger", {})
        if not isinstance(trigger, dict):
            raise BugSpecError("trigger must be an object")
        allowed = {"source_page", "on_page", "action_type", "target", "param", "at_step", "after_step"}
        unknown = set(trigger) - allowed
        if unknown:
            raise BugSpecError(f"unknown trigger keys {sorted(unknown)}")
        payload = data.get("payload", {})
        if not isinstance(payload, dict):
            raise BugSpecError("payload must be an object")
        if category == "missing_element" and "selector" not in payload:
            raise BugSpecError("missing_element payload needs a selector")
        if category == "navigation_failure" and "redirect_to" not in payload:
            raise BugSpecError("navigation_failure payload needs redirect_to")
        return cls(
            category=category,
            trigger=trigger,
            payload=payload,
            expected_step=data.get("expected_step"),
        )

    @classmethod
    def from_file(cls, path: "str | Path") -> "BugSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {"category": self.category, "trigger": self.trigger, "payload": self.payload}
        if self.expected_step is not None:
            out["expected_step"] = self.expected_step
        return out


class BuggyDriver(Driver):
    """Wraps a SimDriver and applies one injected bug."""

    def __init__(self, inner: SimDriver, bug: BugSpec):
        self.inner = inner
        self.bug = bug
        self.warnings: list[str] = []

    def reset(self) -> RawPage:
        self.inner.reset()
        return self.observe()

    def observe(self) -> RawPage:
        return self._filter(self.inner.observe())

    def perform(self, action: ExecutableAction) -> RawPage:
        fired = self._trigger_matches(action)
        if self.bug.category == "noop_action" and fired:
            self.inner.step_count += 1
            return self._filter(self.inner.observe())
        page = self.inner.perform(action)
        if fired and self.bug.category == "data_inconsistency":
            self._corrupt_stores()
            page = self.inner.observe()
        if fired and self.bug.category == "navigation_failure":
            self.inner.current_page = self.bug.payload["redirect_to"]
            page = self.inner.observe()
        return self._filter(page)

    def _trigger_matches(self, action: ExecutableAction) -> bool:
        trig = self.bug.trigger
        if "source_page" in trig and not fnmatchcase(
            self.inner.current_page, trig["source_page"]
        ):
            return False
        if "action_type" in trig and action.action_type.value != trig["action_type"]:
            return False
        if "target" in trig and not fnmatchcase(action.target_id, trig["target"]):
            return False
        if "param" in trig:
            param = action.text if action.action_type is ActionType.TYPE else action.key
            if re.fullmatch(trig["param"], param) is None:
                return False
        step_no = self.inner.step_count + 1  # number of the perform about to run
        if "at_step" in trig and step_no != trig["at_step"]:
            return False
        if "after_step" in trig and step_no <= trig["after_step"]:
            return False
        return True

    def _corrupt_stores(self) -> None:
        payload = self.bug.payload
        if "set" in payload:
            self.inner._store_set(payload["set"]["path"], payload["set"]["value"])
        if "delta" in payload:
            path = payload["delta"]["path"]
            current = _resolve_path(path, self.inner.stores)
            self.inner._store_set(path, current + payload["delta"]["amount"])
        if "append" in payload:
            target = _resolve_path(payload["append"]["path"], self.inner.stores)
            target.append(copy.deepcopy(payload["append"]["value"]))

    def _filter(self, page: RawPage) -> RawPage:
        if self.bug.category != "missing_element":
            return page
        trig = self.bug.trigger
        if "on_page" in trig and not fnmatchcase(self.inner.current_page, trig["on_page"]):
            return page
        if "after_step" in trig and self.inner.step_count <= trig["after_step"]:
            return page
        selector = self.bug.payload["selector"]
        removed = _remove_matching(page.root, selector)
        if not removed:
            note = f"missing_element selector {selector!r} matched nothing on {self.inner.current_page}"
            if note not in self.warnings:
                self.warnings.append(note)
        return page


def _remove_matching(root: Element, selector: str) -> int:
    removed = 0
    for node in list(root.walk()):
        if node is root:
            continue
        if fnmatchcase(node.element_id, selector) and node.parent is not None:
            node.parent.children.remove(node)
            removed += 1
    return removed


def inject(driver: SimDriver, bug: BugSpec) -> BuggyDriver:
    return BuggyDriver(driver, bug)
