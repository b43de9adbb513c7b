#!/usr/bin/env python3
"""Regenerate the desk benchmark case files.

Run from this directory: python3 build_cases.py
Writes cases/<id>/{requirement.*,app_ref.txt,ground_truth.json,bug.json,
gateway_script.json}. The files are committed; this script exists so the
twelve cases stay structurally consistent when edited.
"""

import json
from pathlib import Path

import yaml

ROOT = Path(__file__).resolve().parent / "cases"


def bundle(pre: str, post: str, schemas: str = "") -> str:
    return (
        "[schemas]\n" + (schemas.rstrip() + "\n" if schemas.strip() else "")
        + "[precondition]\n" + (pre.rstrip() + "\n" if pre.strip() else "")
        + "[postcondition]\n" + post.rstrip() + "\n"
    )


def write_case(case_id, app_ref, requirement, gt_steps, bug, notes_response=None,
               parse_response=None, schemas=""):
    case = ROOT / case_id
    case.mkdir(parents=True, exist_ok=True)
    if isinstance(requirement, str):
        (case / "requirement.txt").write_text(requirement, encoding="utf-8")
    else:
        (case / "requirement.yaml").write_text(
            yaml.safe_dump({"steps": requirement}, sort_keys=False, width=100),
            encoding="utf-8",
        )
    (case / "app_ref.txt").write_text(app_ref + "\n", encoding="utf-8")
    (case / "ground_truth.json").write_text(
        json.dumps({"schemas": schemas, "steps": gt_steps}, indent=2) + "\n",
        encoding="utf-8",
    )
    (case / "bug.json").write_text(json.dumps(bug, indent=2) + "\n", encoding="utf-8")

    rules = []
    if parse_response is not None:
        rules.append({"role": "parse_requirement", "responses": [parse_response]})
    if notes_response is not None:
        rules.append({"role": "infer_dependencies", "responses": [notes_response]})
    rules.append(
        {
            "role": "symbolize_and_assert",
            "responses": [
                bundle(s.get("precondition", ""), s["postcondition"],
                       schemas if i == 0 else "")
                for i, s in enumerate(gt_steps)
            ],
        }
    )
    rules.append({"role": "reidentify_page", "responses": ["same"], "repeat": True})
    (case / "gateway_script.json").write_text(
        json.dumps({"rules": rules}, indent=2) + "\n", encoding="utf-8"
    )


CART_BADGE = """\
links = state.find("cart link")
assert len(links) >= 1, "no cart link"
assert "Cart ({n})" in links[0].text, "cart badge is not {n}"
"""


def main():
    # ms1: checkout button silently bounces back home ------------------------
    write_case(
        "ms1",
        "builtin:minishop_stocked",
        [
            {"action": "click the cart link",
             "expectation": "the cart lists pen and book with subtotal $5.00"},
            {"condition": "the cart shows a checkout button",
             "action": 'click the "Proceed to checkout" button',
             "expectation": "the checkout page shows total $5.00"},
        ],
        [
            {"postcondition": """\
rows = [e for e in state.elements if e.role == "listitem"]
assert any("pen" in r.text for r in rows), "pen missing in cart"
assert any("book" in r.text for r in rows), "book missing in cart"
labels = state.find("subtotal")
assert len(labels) >= 1, "no subtotal shown"
assert "$5.00" in labels[0].text, "subtotal is wrong"
"""},
            {"precondition": """\
assert len(state.find("checkout button")) >= 1, "no checkout button"
""",
             "postcondition": """\
heads = [e for e in state.elements if e.role == "heading"]
assert any(h.text == "Checkout" for h in heads), "not on the checkout page"
totals = state.find("total")
assert len(totals) >= 1, "no total shown"
assert "$5.00" in totals[0].text, "checkout total is wrong"
"""},
        ],
        {
            "category": "navigation_failure",
            "trigger": {"source_page": "cart", "target": "checkout-btn"},
            "payload": {"redirect_to": "home"},
            "expected_step": 2,
        },
        notes_response="temporal 1->2: checkout follows the cart review",
    )

    # ms2: cart subtotal drifts from the item prices -------------------------
    write_case(
        "ms2",
        "builtin:minishop",
        [
            {"action": 'click the "Add to cart" button for pen',
             "expectation": "the cart link shows 1 item"},
            {"action": 'click the "Add to cart" button for book',
             "expectation": "the cart link shows 2 items"},
            {"condition": "the cart link shows 2 items",
             "action": "click the cart link",
             "expectation": "the cart lists pen and book and the subtotal equals the sum of their prices"},
        ],
        [
            {"postcondition": CART_BADGE.format(n=1)},
            {"postcondition": CART_BADGE.format(n=2)},
            {"precondition": CART_BADGE.format(n=2),
             "postcondition": """\
rows = [e for e in state.elements if e.role == "listitem"]
assert any("pen" in r.text for r in rows), "Product pen missing in current cart"
assert any("book" in r.text for r in rows), "Product book missing in current cart"
labels = state.find("subtotal")
assert len(labels) >= 1, "no subtotal shown"
expected = 2.0 + 3.0
assert f"${expected:.2f}" in labels[0].text, "Cart subtotal mismatch"
"""},
        ],
        {
            "category": "data_inconsistency",
            "trigger": {"source_page": "home", "target": "nav-cart"},
            "payload": {
                "append": {"path": "cart.items",
                           "value": {"title": "fee", "price": 1.0, "qty": 1}},
                "delta": {"path": "cart.subtotal", "amount": 1.0},
            },
            "expected_step": 3,
        },
        notes_response=(
            "causal 1->3: adding the pen makes it appear in the cart\n"
            "causal 2->3: adding the book makes it appear in the cart\n"
            "data 1->3: the pen price feeds the cart subtotal\n"
            "data 2->3: the book price feeds the cart subtotal"
        ),
    )

    # ms3: search results grow a row that does not match the query -----------
    write_case(
        "ms3",
        "builtin:minishop",
        [
            {"action": 'type "pen" into the search box',
             "expectation": "the search box contains pen"},
            {"action": "click the Search button",
             "expectation": "there is exactly one result and it matches pen"},
        ],
        [
            {"postcondition": """\
boxes = state.find("search box")
assert len(boxes) >= 1, "no search box"
assert "pen" in boxes[0].text, "typed text not shown"
"""},
            {"postcondition": """\
results = [e for e in state.elements if e.role == "text" and "$" in e.text]
assert len(results) == 1, "unexpected number of results"
assert all("pen" in r.text for r in results), "a result does not match the query"
"""},
        ],
        {
            "category": "data_inconsistency",
            "trigger": {"source_page": "home", "target": "search-btn"},
            "payload": {
                "append": {"path": "search.results",
                           "value": {"title": "drone", "price": 9.0, "stock": 1}},
            },
            "expected_step": 2,
        },
        notes_response="data 1->2: the typed query decides which results show",
    )

    # ms4: the subtotal label vanishes from the cart page --------------------
    write_case(
        "ms4",
        "builtin:minishop_stocked",
        [
            {"action": "click the cart link",
             "expectation": "the cart shows the subtotal label"},
        ],
        [
            {"postcondition": """\
labels = state.find("subtotal")
assert len(labels) >= 1, "subtotal label is missing"
assert "$5.00" in labels[0].text, "subtotal is wrong"
"""},
        ],
        {
            "category": "missing_element",
            "trigger": {"on_page": "cart"},
            "payload": {"selector": "subtotal"},
            "expected_step": 1,
        },
    )

    # ms5: the confirmed order total is off by two ---------------------------
    write_case(
        "ms5",
        "builtin:minishop_stocked",
        [
            {"action": "click the cart link",
             "expectation": "the cart subtotal reads $5.00"},
            {"action": 'click the "Proceed to checkout" button',
             "expectation": "the checkout total reads $5.00"},
            {"action": 'click the "Place order" button',
             "expectation": "the confirmation shows order total $5.00"},
        ],
        [
            {"postcondition": """\
labels = state.find("subtotal")
assert len(labels) >= 1, "no subtotal shown"
assert "$5.00" in labels[0].text, "subtotal is wrong"
"""},
            {"postcondition": """\
totals = state.find("total")
assert len(totals) >= 1, "no total shown"
assert "$5.00" in totals[0].text, "checkout total is wrong"
"""},
            {"postcondition": """\
heads = [e for e in state.elements if e.role == "heading"]
assert any(h.text == "Order confirmed" for h in heads), "not on the confirmation page"
msgs = [e for e in state.elements if e.id == "confirm-msg"]
assert len(msgs) == 1, "no confirmation message"
assert "$5.00" in msgs[0].text, "order total mismatch"
"""},
        ],
        {
            "category": "data_inconsistency",
            "trigger": {"source_page": "checkout", "target": "place-order"},
            "payload": {"delta": {"path": "order.total", "amount": 2.0}},
            "expected_step": 3,
        },
        notes_response=(
            "temporal 1->2: checkout follows the cart review\n"
            "data 1->3: the cart subtotal becomes the confirmed order total"
        ),
    )

    # ms6: add-to-cart on the product page does nothing ----------------------
    write_case(
        "ms6",
        "builtin:minishop",
        [
            {"action": 'click the "View" link for camera',
             "expectation": "the product page shows camera priced $4.00"},
            {"action": 'click the "Add to cart" button',
             "expectation": "the cart link shows 1 item"},
        ],
        [
            {"postcondition": """\
heads = [e for e in state.elements if e.role == "heading"]
assert any(h.text == "camera" for h in heads), "not on the camera page"
prices = state.find("price")
assert len(prices) >= 1, "no price shown"
assert "$4.00" in prices[0].text, "price is wrong"
"""},
            {"postcondition": CART_BADGE.format(n=1)},
        ],
        {
            "category": "noop_action",
            "trigger": {"source_page": "product", "target": "add-to-cart"},
            "payload": {},
            "expected_step": 2,
        },
        notes_response="causal 1->2: the viewed product is the one added to the cart",
    )

    # md1: the freshly saved book's row is missing (plain-text requirement) --
    write_case(
        "md1",
        "builtin:minidocs",
        'Open the add-book form from the dashboard, create a book called '
        '"My Book" by "Me", and make sure it shows up in the list afterwards.\n',
        [
            {"postcondition": """\
heads = [e for e in state.elements if e.role == "heading"]
assert any(h.text == "New book" for h in heads), "not on the form page"
"""},
            {"postcondition": """\
inputs = state.find("title input")
assert len(inputs) >= 1, "no title input"
assert "My Book" in inputs[0].text, "title not typed"
"""},
            {"postcondition": """\
inputs = state.find("author input")
assert len(inputs) >= 1, "no author input"
assert "Me" in inputs[0].text, "author not typed"
"""},
            {"precondition": """\
title_inputs = state.find("title input")
author_inputs = state.find("author input")
assert len(title_inputs) >= 1 and len(author_inputs) >= 1, "form inputs missing"
assert "My Book" in title_inputs[0].text, "title is not filled"
assert "Me" in author_inputs[0].text, "author is not filled"
""",
             "postcondition": """\
labels = [e for e in state.elements if e.role == "text"]
assert any("My Book" in l.text for l in labels), "new book not in the list"
assert len(state.find("Saved")) >= 1, "no saved message"
"""},
        ],
        {
            "category": "missing_element",
            "trigger": {"on_page": "books", "after_step": 3},
            "payload": {"selector": "book-1"},
            "expected_step": 4,
        },
        notes_response=(
            "data 2->4: the typed title becomes the saved book's title\n"
            "data 3->4: the typed author is stored with the book\n"
            "causal 4->4: saving adds the book to the list"
        ),
        parse_response=json.dumps(
            [
                {"condition": "", "action": 'click the "Add book" link',
                 "expectation": "the new book form is shown"},
                {"condition": "", "action": 'type "My Book" into the title input',
                 "expectation": "the title input contains My Book"},
                {"condition": "", "action": 'type "Me" into the author input',
                 "expectation": "the author input contains Me"},
                {"condition": "the form has title and author filled",
                 "action": 'click the "Save" button',
                 "expectation": "the books list shows My Book"},
            ],
            indent=1,
        ),
    )

    # md2: the Return button never appears after borrowing -------------------
    write_case(
        "md2",
        "builtin:minidocs",
        [
            {"action": 'click the "Books" link',
             "expectation": "the books list shows Linear Algebra"},
            {"action": 'click the "Open" link for Linear Algebra',
             "expectation": "the book page shows status available"},
            {"action": 'click the "Borrow" button',
             "expectation": "the status reads borrowed and a Return button is shown"},
        ],
        [
            {"postcondition": """\
labels = [e for e in state.elements if e.role == "text"]
assert any("Linear Algebra" in l.text for l in labels), "Linear Algebra not listed"
"""},
            {"postcondition": """\
lines = state.find("status")
assert len(lines) >= 1, "no status line"
assert "available" in lines[0].text, "status is not available"
"""},
            {"postcondition": """\
lines = state.find("status")
assert len(lines) >= 1, "no status line"
assert "borrowed" in lines[0].text, "status did not change"
assert len(state.find("Return button")) >= 1, "no return button"
"""},
        ],
        {
            "category": "missing_element",
            "trigger": {"on_page": "book_view", "after_step": 2},
            "payload": {"selector": "return-btn"},
            "expected_step": 3,
        },
        notes_response="causal 3->3: borrowing flips the status and swaps the button",
    )

    # md3: clicking Save silently does nothing -------------------------------
    write_case(
        "md3",
        "builtin:minidocs",
        [
            {"action": 'click the "Add book" link',
             "expectation": "the new book form is shown"},
            {"action": 'type "Cooking 101" into the title input',
             "expectation": "the title input contains Cooking 101"},
            {"action": 'type "Ann" into the author input',
             "expectation": "the author input contains Ann"},
            {"condition": "the form has title and author filled",
             "action": 'click the "Save" button',
             "expectation": "the books list shows Cooking 101"},
        ],
        [
            {"postcondition": """\
heads = [e for e in state.elements if e.role == "heading"]
assert any(h.text == "New book" for h in heads), "not on the form page"
"""},
            {"postcondition": """\
inputs = state.find("title input")
assert len(inputs) >= 1, "no title input"
assert "Cooking 101" in inputs[0].text, "title not typed"
"""},
            {"postcondition": """\
inputs = state.find("author input")
assert len(inputs) >= 1, "no author input"
assert "Ann" in inputs[0].text, "author not typed"
"""},
            {"precondition": """\
title_inputs = state.find("title input")
author_inputs = state.find("author input")
assert len(title_inputs) >= 1 and len(author_inputs) >= 1, "form inputs missing"
assert "Cooking 101" in title_inputs[0].text, "title is not filled"
assert "Ann" in author_inputs[0].text, "author is not filled"
""",
             "postcondition": """\
heads = [e for e in state.elements if e.role == "heading"]
assert any(h.text == "All books" for h in heads), "not on the books page"
labels = [e for e in state.elements if e.role == "text"]
assert any("Cooking 101" in l.text for l in labels), "new book not in the list"
"""},
        ],
        {
            "category": "noop_action",
            "trigger": {"source_page": "create_form", "target": "save-btn"},
            "payload": {},
            "expected_step": 4,
        },
        notes_response=(
            "data 2->4: the typed title becomes the saved book's title\n"
            "data 3->4: the typed author is stored with the book"
        ),
    )

    # md4: the Books link lands on the wrong page ----------------------------
    write_case(
        "md4",
        "builtin:minidocs",
        [
            {"action": 'click the "Books" link',
             "expectation": "the books list page is shown with Linear Algebra"},
        ],
        [
            {"postcondition": """\
heads = [e for e in state.elements if e.role == "heading"]
assert any(h.text == "All books" for h in heads), "not on the books page"
labels = [e for e in state.elements if e.role == "text"]
assert any("Linear Algebra" in l.text for l in labels), "Linear Algebra not listed"
"""},
        ],
        {
            "category": "navigation_failure",
            "trigger": {"source_page": "dashboard", "target": "nav-books"},
            "payload": {"redirect_to": "create_form"},
            "expected_step": 1,
        },
    )

    # md5: saving redirects to the dashboard instead of the list -------------
    write_case(
        "md5",
        "builtin:minidocs",
        [
            {"action": 'click the "Add book" link',
             "expectation": "the new book form is shown"},
            {"action": 'type "Gardening" into the title input',
             "expectation": "the title input contains Gardening"},
            {"action": 'type "Lee" into the author input',
             "expectation": "the author input contains Lee"},
            {"action": 'click the "Save" button',
             "expectation": "the books list shows Gardening"},
        ],
        [
            {"postcondition": """\
heads = [e for e in state.elements if e.role == "heading"]
assert any(h.text == "New book" for h in heads), "not on the form page"
"""},
            {"postcondition": """\
inputs = state.find("title input")
assert len(inputs) >= 1, "no title input"
assert "Gardening" in inputs[0].text, "title not typed"
"""},
            {"postcondition": """\
inputs = state.find("author input")
assert len(inputs) >= 1, "no author input"
assert "Lee" in inputs[0].text, "author not typed"
"""},
            {"postcondition": """\
heads = [e for e in state.elements if e.role == "heading"]
assert any(h.text == "All books" for h in heads), "not on the books page"
labels = [e for e in state.elements if e.role == "text"]
assert any("Gardening" in l.text for l in labels), "new book not in the list"
"""},
        ],
        {
            "category": "navigation_failure",
            "trigger": {"source_page": "create_form", "target": "save-btn"},
            "payload": {"redirect_to": "dashboard"},
            "expected_step": 4,
        },
        notes_response="data 2->4: the typed title becomes the saved book's title",
    )

    # md6: the Borrow click is swallowed -------------------------------------
    write_case(
        "md6",
        "builtin:minidocs",
        [
            {"action": 'click the "Books" link',
             "expectation": "the books list shows Linear Algebra"},
            {"action": 'click the "Open" link for Linear Algebra',
             "expectation": "the book page shows status available"},
            {"action": 'click the "Borrow" button',
             "expectation": "the status reads borrowed"},
        ],
        [
            {"postcondition": """\
labels = [e for e in state.elements if e.role == "text"]
assert any("Linear Algebra" in l.text for l in labels), "Linear Algebra not listed"
"""},
            {"postcondition": """\
lines = state.find("status")
assert len(lines) >= 1, "no status line"
assert "available" in lines[0].text, "status is not available"
"""},
            {"postcondition": """\
lines = state.find("status")
assert len(lines) >= 1, "no status line"
assert "borrowed" in lines[0].text, "status did not change"
"""},
        ],
        {
            "category": "noop_action",
            "trigger": {"source_page": "book_view", "target": "borrow-btn"},
            "payload": {},
            "expected_step": 3,
        },
        notes_response="temporal 2->3: borrowing needs the book page open",
    )

    print(f"wrote {len(list(ROOT.iterdir()))} cases under {ROOT}")


if __name__ == "__main__":
    main()
