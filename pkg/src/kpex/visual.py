"""Visual features from rendered-page layout trees.

A layout file is JSON: a {"page": [width, height]} header and a "root" node
tree where each node carries tag, box [x, y, w, h] in page pixels, font size,
bold flag, optional leaf text, and children. Every token of the document gets
an 18-float vector: nine features for the node that carries the word and the
same nine for its parent block (the nearest block-tagged ancestor). Continuous
features are normalized by page dimensions and the page's maximum font size so
everything lands in [0, 1].

Feature order (word value then parent value for each):
font, block width, block height, x, y, bold, inline-tag, block-tag, DOM-leaf.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .documents import VISUAL_DIM, make_document, tokenize, validate_visual_rows

INLINE_TAGS = frozenset({"a", "span", "b", "i", "em", "strong", "u", "small", "sup", "sub"})
BLOCK_TAGS = frozenset(
    {"div", "p", "h1", "h2", "h3", "h4", "h5", "h6", "li", "ul", "ol",
     "table", "tr", "td", "section", "article", "header", "footer"}
)


class LayoutError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DomNode:
    tag: str
    box: tuple  # (x, y, width, height) in page pixels
    font: float
    bold: bool
    children: tuple
    text: str | None = None

    @property
    def is_leaf(self):
        return not self.children


def _parse_node(obj, path):
    if not isinstance(obj, dict):
        raise LayoutError(f"{path}: node must be an object")
    try:
        tag = str(obj["tag"]).lower()
        box = tuple(float(v) for v in obj["box"])
        font = float(obj["font"])
        bold = bool(obj.get("bold", False))
    except (KeyError, TypeError, ValueError) as exc:
        raise LayoutError(f"{path}: bad node fields ({exc})") from exc
    if len(box) != 4:
        raise LayoutError(f"{path}: box must be [x, y, w, h]")
    if box[2] < 0 or box[3] < 0:
        raise LayoutError(f"{path}: negative box dimensions")
    if font < 0:
        raise LayoutError(f"{path}: negative font size")
    children = tuple(
        _parse_node(child, f"{path}.children[{i}]")
        for i, child in enumerate(obj.get("children", ()))
    )
    text = obj.get("text")
    if text is not None and children:
        raise LayoutError(f"{path}: text is only allowed on leaf nodes")
    return DomNode(tag, box, font, bold, children, text)


def classify_tag(tag):
    """Returns (inline flag, block flag); a tag is inline, block, or neither."""
    t = tag.lower()
    return float(t in INLINE_TAGS), float(t in BLOCK_TAGS)


def compute_word_features(word_node, parent_block, page_dims, max_font):
    """The 18-float vector for one word: word-node and parent-block features."""
    page_w, page_h = page_dims
    if page_w <= 0 or page_h <= 0:
        raise LayoutError("page dimensions must be positive")
    if max_font <= 0:
        raise LayoutError("page max font must be positive")

    def nine(node):
        x, y, w, h = node.box
        inline, block = classify_tag(node.tag)
        return [
            node.font / max_font,
            w / page_w,
            h / page_h,
            x / page_w,
            y / page_h,
            float(node.bold),
            inline,
            block,
            float(node.is_leaf),
        ]

    vec = np.empty(VISUAL_DIM)
    vec[0::2] = nine(word_node)
    vec[1::2] = nine(parent_block)
    return np.clip(vec, 0.0, 1.0)


def _walk_leaves(node, ancestors):
    if node.text is not None:
        yield node, ancestors
    chain = ancestors + (node,)
    for child in node.children:
        yield from _walk_leaves(child, chain)


def _nearest_block(ancestors, root):
    for node in reversed(ancestors):
        if node.tag in BLOCK_TAGS:
            return node
    return root


def parse_layout(layout, doc_id="layout"):
    """Parse one layout object into (text, visual rows) in depth-first order.

    Every token maps to exactly one text-carrying leaf; the document text is
    the leaf texts joined in traversal order, which re-tokenizes to the same
    token sequence the features were computed for.
    """
    if not isinstance(layout, dict) or "page" not in layout or "root" not in layout:
        raise LayoutError(f"{doc_id}: layout needs 'page' and 'root' entries")
    page = layout["page"]
    if not isinstance(page, (list, tuple)) or len(page) != 2:
        raise LayoutError(f"{doc_id}: page must be [width, height]")
    page_dims = (float(page[0]), float(page[1]))
    if page_dims[0] <= 0 or page_dims[1] <= 0:
        raise LayoutError(f"{doc_id}: page dimensions must be positive")
    root = _parse_node(layout["root"], f"{doc_id}.root")
    fonts = []

    def collect(node):
        fonts.append(node.font)
        for child in node.children:
            collect(child)

    collect(root)
    max_font = max(fonts)
    if max_font <= 0:
        raise LayoutError(f"{doc_id}: no positive font size on any node")

    pieces = []
    rows = []
    for leaf, ancestors in _walk_leaves(root, ()):
        tokens = tokenize(leaf.text)
        if not tokens:
            continue
        pieces.append(leaf.text)
        features = compute_word_features(
            leaf, _nearest_block(ancestors, root), page_dims, max_font
        )
        rows.extend([features] * len(tokens))
    text = " ".join(pieces)
    if not rows:
        return text, []
    return text, np.stack(rows).tolist()


def load_layout_file(path, doc_id):
    """Read and parse a layout JSON file; JSON errors keep line/column info."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            layout = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LayoutError(
                f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
            ) from exc
    return parse_layout(layout, doc_id=doc_id)


def passthrough_features(doc_id, text, visual_rows):
    """Ingest precomputed visual rows attached to raw text.

    Validates the row count against the tokenization and the 18-float width,
    then builds a Document. Rows are clamped to [0, 1].
    """
    n = len(tokenize(text))
    validate_visual_rows(doc_id, n, visual_rows)
    return make_document(doc_id, text, visual_rows)
