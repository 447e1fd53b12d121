"""Page reduction into the two representations consumed by extraction.

``HTML_COMPRESSED`` drops a fixed set of boilerplate elements (head, footer,
header, script, iframe, path, style, symbol, noscript, svg, g, use, option),
strips every attribute except ``class`` and ``id``, and removes comments and
whitespace between tags. ``TEXT`` is the plain-text projection of the
compressed document with one line per block element.

Token counts use a deterministic proxy, ceil(utf8_bytes / 4), so cost
accounting is reproducible without a vendor tokenizer; a live provider's
reported usage takes precedence in ledgers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Union

from . import htmltree
from .htmltree import Document, Element, TextNode

BANNED_ELEMENTS = frozenset({
    "head", "footer", "header", "script", "iframe", "path", "style",
    "symbol", "noscript", "svg", "g", "use", "option",
})

KEPT_ATTRIBUTES = ("class", "id")

_WS_RUN = re.compile(r"\s+")


class Variant(str, Enum):
    HTML_COMPRESSED = "HTML_COMPRESSED"
    TEXT = "TEXT"


class UnparsableDocument(Exception):
    """Raised when even lenient parsing yields an empty tree."""


class WrongVariant(Exception):
    """Raised when an operation receives the wrong document variant."""


@dataclass(frozen=True)
class RawDocument:
    page_id: str
    url: str
    html: str


@dataclass(frozen=True)
class CompressedDocument:
    page_id: str
    variant: Variant
    content: str
    token_count: int


def count_tokens(content: str) -> int:
    """Deterministic token estimate: ceil(len(utf8 bytes) / 4)."""
    n = len(content.encode("utf-8"))
    return (n + 3) // 4


def compress_html(doc: RawDocument) -> CompressedDocument:
    """Reduce raw HTML to the attribute-stripped, element-pruned variant."""
    tree = htmltree.parse_html(doc.html)
    if tree.is_empty():
        raise UnparsableDocument(f"page {doc.page_id}: no parsable content")
    _prune(tree)
    content = htmltree.serialize(tree)
    return CompressedDocument(
        page_id=doc.page_id,
        variant=Variant.HTML_COMPRESSED,
        content=content,
        token_count=count_tokens(content),
    )


def extract_text(doc: CompressedDocument) -> CompressedDocument:
    """Project a compressed document to its plain text content."""
    if doc.variant is not Variant.HTML_COMPRESSED:
        raise WrongVariant(f"expected HTML_COMPRESSED input, got {doc.variant.value}")
    tree = htmltree.parse_html(doc.content)
    content = "\n".join(htmltree.block_text_lines(tree))
    return CompressedDocument(
        page_id=doc.page_id,
        variant=Variant.TEXT,
        content=content,
        token_count=count_tokens(content),
    )


def compress_both(doc: RawDocument) -> tuple[CompressedDocument, CompressedDocument]:
    """Both variants from a single parse (pipeline fast path)."""
    tree = htmltree.parse_html(doc.html)
    if tree.is_empty():
        raise UnparsableDocument(f"page {doc.page_id}: no parsable content")
    _prune(tree)
    html_content = htmltree.serialize(tree)
    text_content = "\n".join(htmltree.block_text_lines(tree))
    return (
        CompressedDocument(
            page_id=doc.page_id,
            variant=Variant.HTML_COMPRESSED,
            content=html_content,
            token_count=count_tokens(html_content),
        ),
        CompressedDocument(
            page_id=doc.page_id,
            variant=Variant.TEXT,
            content=text_content,
            token_count=count_tokens(text_content),
        ),
    )


def _prune(node: Union[Document, Element]) -> None:
    """Remove banned elements, extra attributes and inter-tag whitespace."""
    kept: list[Union[Element, TextNode]] = []
    for child in node.children:
        if isinstance(child, TextNode):
            cleaned = _WS_RUN.sub(" ", child.text).strip()
            if cleaned:
                kept.append(TextNode(text=cleaned))
            continue
        if child.tag in BANNED_ELEMENTS:
            continue
        child.attrs = {
            name: value
            for name, value in child.attrs.items()
            if name in KEPT_ATTRIBUTES
        }
        _prune(child)
        kept.append(child)
    node.children = kept
