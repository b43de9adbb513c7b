"""Intent reading, grounding, plan caching and action application."""

import pytest

from weboracle.actions import (
    ActionCompileError,
    ActionExecutor,
    ActionType,
    DriverFault,
    ActionFailed,
    Driver,
    ExecutableAction,
    GroundingError,
    TextMatchGrounder,
    apply_action,
    ground,
    read_intent,
    split_clauses,
)
from weboracle.gateway import ModelGateway, ScriptRule, ScriptedProfile
from weboracle.trace import PageReidentifier, RawPage, Session, element


def page(*kids):
    return RawPage(
        root=element("root", "page", "Demo", box=(0, 0, 800, 600), children=list(kids)),
        width=800,
        height=600,
        url="https://x.local/",
    )


def button(eid, text, box, **attrs):
    return element(eid, "button", text, box=box, interactable=True, attributes=attrs)


def test_split_clauses():
    assert split_clauses("click A; then click B and then press enter") == [
        "click A",
        "click B",
        "press enter",
    ]
    assert split_clauses("  ") == []


def test_read_intent_variants():
    press = read_intent("press the Enter key")
    assert press.action_type is ActionType.PRESS and press.key == "Enter"

    wait = read_intent("wait for 1.5 seconds")
    assert wait.action_type is ActionType.WAIT and wait.wait_ms == 1500

    down = read_intent("scroll down 250")
    assert (down.action_type, down.dy) == (ActionType.SCROLL, 250)
    assert read_intent("scroll up").dy == -400

    typed = read_intent('type "alice" into the username field')
    assert typed.action_type is ActionType.TYPE
    assert typed.text == "alice"
    assert typed.target_desc == "username field"
    assert typed.role_hint == "input"

    click = read_intent('click the "Log in" button')
    assert click.action_type is ActionType.CLICK
    assert "log in" in click.target_desc.lower()

    # unknown verbs fall back to click on whatever nouns remain
    fallback = read_intent("open the settings panel")
    assert fallback.action_type is ActionType.CLICK
    assert "settings" in fallback.target_desc


def test_read_intent_rejections():
    with pytest.raises(ActionCompileError):
        read_intent("")
    with pytest.raises(ActionCompileError, match="quoted"):
        read_intent("type something into the box")


def test_text_match_grounder_picks_best_center():
    pg = page(
        button("save", "Save draft", (10, 10, 110, 40)),
        button("send", "Send message", (10, 60, 110, 90)),
    )
    assert TextMatchGrounder().predict("send the message", pg) == (60.0, 75.0)
    with pytest.raises(GroundingError):
        TextMatchGrounder().predict("delete everything", pg)


def test_exact_quoted_text_outranks_partial_overlap():
    # "Log" appears in both labels; the exact-text bonus must win
    pg = page(
        button("b-out", "Log out", (10, 10, 100, 30)),
        button("b-in", "Log in", (10, 40, 100, 60)),
    )
    result = ground("Log out", pg, TextMatchGrounder())
    assert result.chosen_id == "b-out"


def test_crop_doubles_once_when_empty():
    # target far from any interactable: first crop misses, doubled crop hits
    pg = page(
        element("hint", "label", "press start", box=(0, 0, 40, 20)),
        button("start", "start", (350, 300, 420, 330)),
    )
    result = ground("press start hint", pg, TextMatchGrounder(), crop_radius=30)
    assert result.chosen_id == "start"


def test_gateway_selection_among_candidates():
    pg = page(
        button("b1", "Buy", (10, 10, 60, 30)),
        button("b2", "Buy", (10, 40, 60, 60)),
    )
    script = ScriptedProfile([ScriptRule(role="select_action", responses=["b2"])])
    result = ground("buy", pg, TextMatchGrounder(), gateway=ModelGateway(script))
    assert result.chosen_id == "b2"
    assert result.selected_by == "gateway"

    numeric = ScriptedProfile([ScriptRule(role="select_action", responses=["2"])])
    assert ground("buy", pg, TextMatchGrounder(), gateway=ModelGateway(numeric)).chosen_id == "b2"

    bad = ScriptedProfile([ScriptRule(role="select_action", responses=["b99"])])
    with pytest.raises(GroundingError, match="names no candidate"):
        ground("buy", pg, TextMatchGrounder(), gateway=ModelGateway(bad))


def test_executor_plans_and_caches():
    pg = page(
        button("login-btn", "Log in", (10, 100, 110, 130)),
        element(
            "user-input", "input", "username", box=(10, 10, 210, 40), interactable=True
        ),
    )
    ex = ActionExecutor()
    plan = ex.plan('type "alice" into the username field; then click the Log in button', pg)
    assert [p.action.action_type for p in plan] == [ActionType.TYPE, ActionType.CLICK]
    assert plan[0].action.target_id == "user-input"
    assert plan[0].action.text == "alice"
    assert plan[1].action.target_id == "login-btn"

    again = ex.plan('type "alice" into the username field; then click the Log in button', pg)
    assert again is plan
    assert ex.cache.hits == 1 and ex.cache.misses == 1


def test_press_needs_no_grounding():
    ex = ActionExecutor()
    plan = ex.plan("press enter", page())
    assert plan[0].grounding is None
    assert plan[0].action.key == "Enter"


class _OneStepDriver(Driver):
    """Returns a second page after any perform()."""

    def __init__(self, first: RawPage, second: RawPage, fail=False):
        self.first = first
        self.second = second
        self.fail = fail

    def observe(self):
        return self.first

    def perform(self, action):
        if self.fail:
            raise DriverFault("element gone")
        return self.second

    def reset(self):
        return self.first


def test_apply_action_appends_state():
    first = page(button("go", "Go", (0, 0, 10, 10)))
    second = page(element("done", "label", "Done", box=(0, 0, 50, 20)))
    session = Session()
    reid = PageReidentifier()
    from weboracle.trace import append_state

    append_state(session, first, reid)
    state = apply_action(
        _OneStepDriver(first, second),
        ExecutableAction(ActionType.CLICK, target_id="go"),
        session,
        reid,
    )
    assert state.step_index == 1
    assert len(session.history) == 2


def test_apply_action_wraps_driver_faults():
    first = page(button("go", "Go", (0, 0, 10, 10)))
    session = Session()
    reid = PageReidentifier()
    from weboracle.trace import append_state

    append_state(session, first, reid)
    with pytest.raises(ActionFailed, match="element gone"):
        apply_action(
            _OneStepDriver(first, first, fail=True),
            ExecutableAction(ActionType.CLICK, target_id="go"),
            session,
            reid,
        )
