"""Binding environments shared by the conformance corpus runners.

Each fixture is a name mapped to a builder returning (bindings, registry,
extractor). Builders construct fresh objects per call so one program can
never leak state into the next, and the extractors are deterministic
closures so both evaluators see identical symbol values.
"""

from __future__ import annotations

import re

from weboracle.schemas import SchemaRegistry, SymbolInstance, parse_schema_text
from weboracle.trace import Element, Session, State, element


def _state(step_index: int, page_id: str, summary: str, url: str, root: Element) -> State:
    return State(
        step_index=step_index,
        page_id=page_id,
        summary=summary,
        url=url,
        root=root,
        elements=list(root.walk()),
    )


def _session(*states: State) -> Session:
    sess = Session()
    sess.history.extend(states)
    sess.page_ids_issued = len({s.page_id for s in states})
    return sess


def minimal():
    root = element(
        "root",
        "page",
        "Home",
        box=(0, 0, 1280, 800),
        children=[
            element("h1", "heading", "Welcome back", box=(40, 20, 400, 60)),
            element("note", "paragraph", "3 unread messages", box=(40, 80, 300, 100)),
            element("login-btn", "button", "Log in", box=(40, 120, 140, 150), interactable=True),
            element("user-input", "textbox", "", box=(40, 160, 300, 190), interactable=True),
        ],
    )
    st = _state(0, "p0", "Home page", "https://app.local/home", root)
    return {"session": _session(st), "state": st}, SchemaRegistry(), None


_CART_SCHEMAS = """
schema Product {
    title: string;
    price: number;
}
schema Cart {
    total: number;
    count: integer;
}
"""


def _cart_extractor(scope, instruction, decl):
    if decl.name == "Product":
        if not isinstance(scope, Element):
            raise ValueError("Product extraction needs an element scope")
        m = re.search(r"\$(\d+\.\d{2})", scope.text)
        if m is None:
            raise ValueError(f"no price in {scope.text!r}")
        title = scope.text.split()[0]
        return SymbolInstance("Product", {"title": title, "price": float(m.group(1))})
    if decl.name == "Cart":
        if not isinstance(scope, State):
            raise ValueError("Cart extraction needs a state scope")
        total = 0.0
        count = 0
        for el in scope.elements:
            m = re.match(r"(\w+) x(\d+) \$(\d+\.\d{2})", el.text)
            if m:
                count += int(m.group(2))
                total += int(m.group(2)) * float(m.group(3))
        return SymbolInstance("Cart", {"total": total, "count": count})
    raise ValueError(f"unsupported schema {decl.name}")


def cart():
    home = element(
        "root",
        "page",
        "Acme store",
        box=(0, 0, 1280, 800),
        children=[
            element("store-title", "heading", "Acme store", box=(40, 20, 300, 60)),
            element("nav-cart", "link", "Cart (0)", box=(1100, 20, 1240, 50), interactable=True),
            element("label-pen", "label", "pen $2.00", box=(40, 100, 240, 130)),
            element(
                "add-pen",
                "button",
                "Add to cart",
                box=(260, 100, 380, 130),
                interactable=True,
                attributes={"product": "pen"},
            ),
            element("label-book", "label", "book $3.00", box=(40, 140, 240, 170)),
            element(
                "add-book",
                "button",
                "Add to cart",
                box=(260, 140, 380, 170),
                interactable=True,
                attributes={"product": "book"},
            ),
        ],
    )

    def cart_page(badge: str, rows: list[tuple[str, str]], subtotal: str) -> Element:
        kids = [
            element("cart-title", "heading", "Your cart", box=(40, 20, 300, 60)),
            element("nav-cart", "link", badge, box=(1100, 20, 1240, 50), interactable=True),
        ]
        y = 100
        for rid, text in rows:
            kids.append(element(rid, "listitem", text, box=(40, y, 400, y + 28)))
            y += 40
        kids.append(element("subtotal", "label", subtotal, box=(40, y, 400, y + 28)))
        kids.append(
            element(
                "checkout-btn",
                "button",
                "Checkout",
                box=(40, y + 40, 180, y + 70),
                interactable=True,
            )
        )
        return element("root", "page", "Your cart", box=(0, 0, 1280, 800), children=kids)

    s0 = _state(0, "p0", "Store front", "https://shop.local/", home)
    s1 = _state(
        1,
        "p1",
        "Cart with one item",
        "https://shop.local/cart",
        cart_page("Cart (1)", [("cart-row-0", "pen x1 $2.00")], "Subtotal: $2.00"),
    )
    s2 = _state(
        2,
        "p1",
        "Cart with two items",
        "https://shop.local/cart",
        cart_page(
            "Cart (2)",
            [("cart-row-0", "pen x1 $2.00"), ("cart-row-1", "book x1 $3.00")],
            "Subtotal: $5.00",
        ),
    )
    registry = SchemaRegistry(parse_schema_text(_CART_SCHEMAS))
    return {"session": _session(s0, s1, s2), "state": s2}, registry, _cart_extractor


_LIBRARY_SCHEMAS = """
schema Book {
    title: string;
    status: string;
}
"""


def _library_extractor(scope, instruction, decl):
    if decl.name != "Book":
        raise ValueError(f"unsupported schema {decl.name}")
    text = scope.text if isinstance(scope, Element) else scope.summary
    m = re.match(r"(.+) by .+ \[(\w+)\]", text)
    if m:
        return SymbolInstance("Book", {"title": m.group(1), "status": m.group(2)})
    raise ValueError(f"no book in {text!r}")


def library():
    books = element(
        "root",
        "page",
        "Books",
        box=(0, 0, 1024, 768),
        children=[
            element("books-title", "heading", "Books", box=(40, 20, 200, 60)),
            element(
                "book-0",
                "listitem",
                "Linear Algebra by Strang [available]",
                box=(40, 100, 500, 130),
            ),
            element("book-1", "listitem", "Calculus by Spivak [borrowed]", box=(40, 140, 500, 170)),
            element("due-0", "label", "Due: 2024-03-15", box=(520, 140, 700, 170)),
            element("open-0", "link", "Open", box=(520, 100, 580, 130), interactable=True),
        ],
    )
    view = element(
        "root",
        "page",
        "Linear Algebra",
        box=(0, 0, 1024, 768),
        children=[
            element("view-title", "heading", "Linear Algebra", box=(40, 20, 300, 60)),
            element("status-line", "label", "Status: borrowed", box=(40, 100, 300, 130)),
            element("updated", "label", "Updated: 2024-03-01 09:30:00", box=(40, 140, 360, 170)),
            element("return-btn", "button", "Return", box=(40, 180, 140, 210), interactable=True),
        ],
    )
    s0 = _state(0, "p0", "Book list", "https://lib.local/books", books)
    s1 = _state(1, "p1", "One book", "https://lib.local/books/0", view)
    registry = SchemaRegistry(parse_schema_text(_LIBRARY_SCHEMAS))
    return {"session": _session(s0, s1), "state": s1}, registry, _library_extractor


def types():
    # pure-computation programs still need the mandatory bindings
    return minimal()


FIXTURES = {
    "minimal": minimal,
    "cart": cart,
    "library": library,
    "types": types,
}


def build(name: str):
    return FIXTURES[name]()
