"""Lenient HTML document tree with a small CSS selector engine.

Shop pages are frequently invalid HTML, so parsing recovers from mismatched
and unclosed tags instead of failing. The tree is deliberately small: element
nodes with a tag, an attribute dict and children, plus plain text nodes.
Everything downstream (compression, text projection, rule interpretation)
works on this tree.

Selector support is the subset that survives attribute stripping: type
selectors, ``*``, ``.class``, ``#id``, compounds thereof, and descendant /
child (``>``) combinators. Attribute selectors, pseudo-classes and comma
groups are rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from html import escape
from html.parser import HTMLParser
from typing import Iterator, Optional, Union

VOID_ELEMENTS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
})

# Opening tag X implicitly closes an open tag in IMPLICIT_CLOSE[X].
IMPLICIT_CLOSE = {
    "li": {"li"},
    "p": {"p"},
    "td": {"td", "th"},
    "th": {"td", "th"},
    "tr": {"tr", "td", "th"},
    "option": {"option"},
    "dt": {"dt", "dd"},
    "dd": {"dt", "dd"},
}

BLOCK_ELEMENTS = frozenset({
    "address", "article", "aside", "blockquote", "body", "caption", "dd",
    "div", "dl", "dt", "fieldset", "figcaption", "figure", "footer", "form",
    "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr", "html", "li", "main",
    "nav", "ol", "p", "pre", "section", "table", "tbody", "td", "tfoot",
    "th", "thead", "tr", "ul",
})

_WS_RUN = re.compile(r"\s+")


@dataclass
class TextNode:
    text: str


@dataclass
class Element:
    tag: str
    attrs: dict[str, Optional[str]] = field(default_factory=dict)
    children: list[Union["Element", TextNode]] = field(default_factory=list)

    def iter_elements(self) -> Iterator["Element"]:
        """Yield this element and all descendant elements in document order."""
        yield self
        for child in self.children:
            if isinstance(child, Element):
                yield from child.iter_elements()

    def classes(self) -> set[str]:
        raw = self.attrs.get("class") or ""
        return set(raw.split())


@dataclass
class Document:
    """Root container; its children are the document's top-level nodes."""

    children: list[Union[Element, TextNode]] = field(default_factory=list)

    def iter_elements(self) -> Iterator[Element]:
        for child in self.children:
            if isinstance(child, Element):
                yield from child.iter_elements()

    def is_empty(self) -> bool:
        if any(isinstance(c, Element) for c in self.children):
            return False
        return not any(
            isinstance(c, TextNode) and c.text.strip() for c in self.children
        )


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.document = Document()
        self._stack: list[Element] = []

    def _parent_children(self) -> list:
        if self._stack:
            return self._stack[-1].children
        return self.document.children

    def handle_starttag(self, tag, attrs):
        if tag in IMPLICIT_CLOSE:
            while self._stack and self._stack[-1].tag in IMPLICIT_CLOSE[tag]:
                self._stack.pop()
        attr_dict: dict[str, Optional[str]] = {}
        for name, value in attrs:
            if name not in attr_dict:  # keep first occurrence of duplicates
                attr_dict[name] = value
        element = Element(tag=tag, attrs=attr_dict)
        self._parent_children().append(element)
        if tag not in VOID_ELEMENTS:
            self._stack.append(element)

    def handle_startendtag(self, tag, attrs):
        attr_dict: dict[str, Optional[str]] = {}
        for name, value in attrs:
            if name not in attr_dict:
                attr_dict[name] = value
        self._parent_children().append(Element(tag=tag, attrs=attr_dict))

    def handle_endtag(self, tag):
        if tag in VOID_ELEMENTS:
            return
        for i in range(len(self._stack) - 1, -1, -1):
            if self._stack[i].tag == tag:
                del self._stack[i:]
                return
        # Stray end tag: recovered by ignoring it.

    def handle_data(self, data):
        if data:
            self._parent_children().append(TextNode(text=data))

    # Comments, doctype and other declarations are dropped on the floor.
    def handle_comment(self, data):
        pass

    def handle_decl(self, decl):
        pass

    def unknown_decl(self, data):
        pass

    def handle_pi(self, data):
        pass


def parse_html(html: str) -> Document:
    """Parse HTML into a Document, recovering from malformed markup."""
    builder = _TreeBuilder()
    builder.feed(html)
    builder.close()
    return builder.document


def serialize(node: Union[Document, Element, TextNode]) -> str:
    """Serialize a tree back to HTML with no whitespace added between tags."""
    parts: list[str] = []
    _serialize_into(node, parts)
    return "".join(parts)


def _serialize_into(node, parts: list[str]) -> None:
    if isinstance(node, TextNode):
        parts.append(escape(node.text, quote=False))
        return
    if isinstance(node, Document):
        for child in node.children:
            _serialize_into(child, parts)
        return
    parts.append(f"<{node.tag}")
    for name, value in node.attrs.items():
        if value is None:
            parts.append(f" {name}")
        else:
            parts.append(f' {name}="{escape(value)}"')
    parts.append(">")
    if node.tag in VOID_ELEMENTS:
        return
    for child in node.children:
        _serialize_into(child, parts)
    parts.append(f"</{node.tag}>")


def text_content(node: Union[Document, Element, TextNode]) -> str:
    """All descendant text joined with single spaces (for rule extraction)."""
    pieces: list[str] = []
    _collect_text(node, pieces)
    return " ".join(pieces)


def _collect_text(node, pieces: list[str]) -> None:
    if isinstance(node, TextNode):
        cleaned = _WS_RUN.sub(" ", node.text).strip()
        if cleaned:
            pieces.append(cleaned)
        return
    children = node.children if not isinstance(node, TextNode) else []
    for child in children:
        _collect_text(child, pieces)


def block_text_lines(node: Union[Document, Element]) -> list[str]:
    """Visible text as lines: block elements separate lines, inline runs
    within a block are joined with single spaces."""
    lines: list[str] = []
    current: list[str] = []

    def flush() -> None:
        if current:
            lines.append(" ".join(current))
            current.clear()

    def walk(n) -> None:
        if isinstance(n, TextNode):
            cleaned = _WS_RUN.sub(" ", n.text).strip()
            if cleaned:
                current.append(cleaned)
            return
        is_block = isinstance(n, Element) and (
            n.tag in BLOCK_ELEMENTS or n.tag == "br"
        )
        if is_block:
            flush()
        if isinstance(n, Element) or isinstance(n, Document):
            for child in n.children:
                walk(child)
        if is_block:
            flush()

    walk(node)
    flush()
    return lines


# --- CSS selector subset -------------------------------------------------

_SIMPLE_TOKEN = re.compile(
    r"(?P<tag>[a-zA-Z][a-zA-Z0-9-]*|\*)|\.(?P<cls>[a-zA-Z0-9_-]+)|#(?P<id>[a-zA-Z0-9_-]+)"
)


@dataclass(frozen=True)
class SimpleSelector:
    tag: Optional[str]  # None means any tag
    classes: frozenset[str]
    ids: frozenset[str]

    def matches(self, element: Element) -> bool:
        if self.tag is not None and element.tag != self.tag:
            return False
        if self.ids and element.attrs.get("id") not in self.ids:
            return False
        if self.classes and not self.classes.issubset(element.classes()):
            return False
        return True


@dataclass(frozen=True)
class CompiledSelector:
    # (combinator, simple) pairs; the first combinator is always "descendant".
    parts: tuple[tuple[str, SimpleSelector], ...]
    source: str


def parse_selector(selector: str) -> CompiledSelector:
    """Compile a selector string; raises ValueError on unsupported syntax."""
    s = selector.strip()
    if not s:
        raise ValueError("empty selector")
    parts: list[tuple[str, SimpleSelector]] = []
    combinator = "descendant"
    pos = 0
    n = len(s)
    while True:
        simple, pos = _parse_simple(s, pos, selector)
        parts.append((combinator, simple))
        if pos >= n:
            break
        saw_child = False
        while pos < n and (s[pos].isspace() or s[pos] == ">"):
            if s[pos] == ">":
                if saw_child:
                    raise ValueError(f"doubled combinator in {selector!r}")
                saw_child = True
            pos += 1
        if pos >= n:
            raise ValueError(f"dangling combinator in {selector!r}")
        combinator = "child" if saw_child else "descendant"
    return CompiledSelector(parts=tuple(parts), source=selector)


def _parse_simple(s: str, pos: int, full: str) -> tuple[SimpleSelector, int]:
    tag: Optional[str] = None
    classes: set[str] = set()
    ids: set[str] = set()
    matched_any = False
    while pos < len(s) and not s[pos].isspace() and s[pos] != ">":
        m = _SIMPLE_TOKEN.match(s, pos)
        if not m:
            raise ValueError(f"unsupported selector syntax at {s[pos:]!r} in {full!r}")
        if m.group("tag"):
            if matched_any:
                raise ValueError(f"misplaced tag name in {full!r}")
            if m.group("tag") != "*":
                tag = m.group("tag").lower()
        elif m.group("cls"):
            classes.add(m.group("cls"))
        elif m.group("id"):
            ids.add(m.group("id"))
        matched_any = True
        pos = m.end()
    if not matched_any:
        raise ValueError(f"empty simple selector in {full!r}")
    return SimpleSelector(tag=tag, classes=frozenset(classes), ids=frozenset(ids)), pos


def select(
    root: Union[Document, Element],
    selector: Union[str, CompiledSelector],
    limit: int = 10_000,
) -> list[Element]:
    """All elements matching the selector, in document order, capped at limit."""
    compiled = parse_selector(selector) if isinstance(selector, str) else selector
    parents: dict[int, Optional[Element]] = {}
    matches: list[Element] = []
    scanned = 0

    def walk(node, parent: Optional[Element]) -> None:
        nonlocal scanned
        children = node.children
        for child in children:
            if not isinstance(child, Element):
                continue
            parents[id(child)] = parent
            scanned += 1
            if scanned > limit:
                return
            if _selector_matches(compiled, child, parents):
                matches.append(child)
            walk(child, child)

    walk(root, None)
    return matches


def _selector_matches(
    compiled: CompiledSelector,
    element: Element,
    parents: dict[int, Optional[Element]],
) -> bool:
    combinator, simple = compiled.parts[-1]
    if not simple.matches(element):
        return False
    return _match_rest(compiled.parts[:-1], element, combinator, parents)


def _match_rest(parts, element, combinator, parents) -> bool:
    if not parts:
        return True
    _, want = parts[-1]
    ancestor = parents.get(id(element))
    if combinator == "child":
        if ancestor is None or not want.matches(ancestor):
            return False
        return _match_rest(parts[:-1], ancestor, parts[-1][0], parents)
    # descendant: any ancestor may match
    while ancestor is not None:
        if want.matches(ancestor) and _match_rest(
            parts[:-1], ancestor, parts[-1][0], parents
        ):
            return True
        ancestor = parents.get(id(ancestor))
    return False
