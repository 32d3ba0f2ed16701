"""Document model: tokenization, candidate spans, and gold-label alignment.

A document is a sequence of lowercased tokens plus one 18-dimensional visual
feature row per token. Candidate keyphrases are all n-grams up to a maximum
width K; gold phrases are aligned to the token sequence by exact token-level
match, and the training target spreads probability uniformly over every
occurrence of every matched phrase.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .fileio import DatasetError, read_jsonl

VISUAL_DIM = 18
MAX_SPAN_LENGTH = 5
MAX_DOC_LENGTH = 256

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text):
    """Lowercase, split on whitespace, and detach punctuation.

    Alphanumeric runs (including ``_``) stay whole; every other non-space
    character becomes its own token, so "A,B" -> ["a", ",", "b"].
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True, order=True)
class Span:
    """A candidate phrase: ``length`` tokens starting at token ``start``."""

    start: int
    length: int

    def __post_init__(self):
        if self.start < 0 or self.length < 1:
            raise ValueError(f"invalid span ({self.start}, {self.length})")

    @property
    def stop(self):
        return self.start + self.length


@dataclass(frozen=True, eq=False)
class Document:
    id: str
    tokens: tuple
    visual: np.ndarray
    zero_visual: bool = False
    token_offset: int = 0  # position of token 0 in the source document

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")
        if len(self.tokens) < 1:
            raise ValueError(f"document {self.id!r} has no tokens")
        if self.visual.shape != (len(self.tokens), VISUAL_DIM):
            raise ValueError(
                f"document {self.id!r}: visual shape {self.visual.shape} != "
                f"({len(self.tokens)}, {VISUAL_DIM})"
            )

    def __len__(self):
        return len(self.tokens)

    def phrase(self, span):
        return " ".join(self.tokens[span.start : span.stop])


@dataclass(frozen=True, eq=False)
class LabeledDocument:
    document: Document
    keyphrases: tuple

    def __post_init__(self):
        if not self.keyphrases:
            raise ValueError(f"document {self.document.id!r} has no keyphrases")


@dataclass(frozen=True, eq=False)
class SpanTarget:
    """Uniform target distribution over the matched gold spans."""

    spans: tuple

    def __post_init__(self):
        if not self.spans:
            raise ValueError("span target needs at least one span")

    def dense(self, n_tokens, max_len):
        """Target vector aligned with enumerate_spans(n_tokens, max_len)."""
        out = np.zeros(count_spans(n_tokens, max_len))
        mass = 1.0 / len(self.spans)
        for span in self.spans:
            out[span_index(n_tokens, span)] += mass
        return out


def validate_visual_rows(doc_id, n_tokens, rows):
    """Check a raw visual feature list; returns an (n, 18) float64 array.

    Values are clamped to [0, 1]; non-finite values are rejected.
    """
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape != (n_tokens, VISUAL_DIM):
        raise DatasetError(
            f"document {doc_id!r}: visual features have shape {arr.shape}, "
            f"expected ({n_tokens}, {VISUAL_DIM})"
        )
    if not np.isfinite(arr).all():
        raise DatasetError(f"document {doc_id!r}: non-finite visual feature")
    return np.clip(arr, 0.0, 1.0)


def make_document(doc_id, text, visual_rows=None):
    """Tokenize raw text into a Document; returns None for empty token lists.

    Missing visual features are zero-filled and flagged via ``zero_visual``.
    """
    tokens = tuple(tokenize(text))
    if not tokens:
        return None
    if visual_rows is None:
        visual = np.zeros((len(tokens), VISUAL_DIM))
        return Document(doc_id, tokens, visual, zero_visual=True)
    visual = validate_visual_rows(doc_id, len(tokens), visual_rows)
    return Document(doc_id, tokens, visual)


def truncate(doc, max_len=MAX_DOC_LENGTH):
    """Keep the first ``max_len`` tokens (and their visual rows)."""
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    if len(doc) <= max_len:
        return doc
    return Document(
        doc.id, doc.tokens[:max_len], doc.visual[:max_len],
        doc.zero_visual, doc.token_offset,
    )


def enumerate_spans(n_tokens, max_len=MAX_SPAN_LENGTH):
    """All (start, length) spans with length <= max_len, ordered by (length, start)."""
    if n_tokens < 1:
        raise ValueError("need at least one token")
    if max_len < 1:
        raise ValueError("max span length must be at least 1")
    return [
        Span(start, length)
        for length in range(1, min(max_len, n_tokens) + 1)
        for start in range(n_tokens - length + 1)
    ]


def count_spans(n_tokens, max_len=MAX_SPAN_LENGTH):
    k = min(max_len, n_tokens)
    return k * n_tokens - (k * (k - 1)) // 2


def span_index(n_tokens, span):
    """Index of ``span`` within enumerate_spans(n_tokens, ...) ordering."""
    k = span.length
    if span.stop > n_tokens:
        raise ValueError(f"span {span} exceeds document length {n_tokens}")
    offset = (k - 1) * n_tokens - ((k - 1) * (k - 2)) // 2
    return offset + span.start


def match_phrase(doc, phrase):
    """Every span of ``doc`` whose tokens equal the tokenized phrase."""
    needle = tuple(tokenize(phrase))
    if not needle:
        raise ValueError(f"phrase {phrase!r} tokenizes to nothing")
    k = len(needle)
    return [
        Span(i, k)
        for i in range(len(doc) - k + 1)
        if doc.tokens[i : i + k] == needle
    ]


@dataclass
class LabelReport:
    """Per-document accounting of how gold phrases aligned to the text."""

    matched: int = 0
    unmatched: list = field(default_factory=list)
    too_long: list = field(default_factory=list)


def build_labels(labeled, max_len=MAX_SPAN_LENGTH):
    """Align gold phrases to spans; returns (SpanTarget | None, LabelReport).

    Phrases longer than ``max_len`` tokens are unmatchable by construction and
    reported separately. A document where nothing matches yields target None
    and is expected to be skipped (with a counter) by training code.
    """
    report = LabelReport()
    spans = set()
    for phrase in labeled.keyphrases:
        needle = tokenize(phrase)
        if not needle:
            report.unmatched.append(phrase)
            continue
        if len(needle) > max_len:
            report.too_long.append(phrase)
            continue
        found = match_phrase(labeled.document, phrase)
        if found:
            report.matched += 1
            spans.update(found)
        else:
            report.unmatched.append(phrase)
    if not spans:
        return None, report
    return SpanTarget(tuple(sorted(spans, key=lambda s: (s.length, s.start)))), report


@dataclass
class IngestReport:
    total_lines: int = 0
    kept: int = 0
    skipped_empty: list = field(default_factory=list)
    skipped_unlabeled: list = field(default_factory=list)
    zero_visual: list = field(default_factory=list)


def read_dataset(path, require_labels=False):
    """Load a JSONL dataset of {"id", "text", "visual"?, "keyphrases"?}.

    Returns (items, IngestReport). Items are LabeledDocuments when the line
    carries keyphrases, otherwise bare Documents. Documents that tokenize to
    nothing are skipped and counted, not fatal; structural problems (bad JSON,
    wrong visual shape, duplicate ids) raise DatasetError.
    """
    items = []
    report = IngestReport()
    seen_ids = set()
    for lineno, obj in read_jsonl(path):
        report.total_lines += 1
        if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
            raise DatasetError(f"{path}:{lineno}: expected an object with id and text")
        doc_id = str(obj["id"])
        if doc_id in seen_ids:
            raise DatasetError(f"{path}:{lineno}: duplicate document id {doc_id!r}")
        seen_ids.add(doc_id)
        doc = make_document(doc_id, obj["text"], obj.get("visual"))
        if doc is None:
            report.skipped_empty.append(doc_id)
            continue
        if doc.zero_visual:
            report.zero_visual.append(doc_id)
        phrases = obj.get("keyphrases")
        if phrases:
            items.append(LabeledDocument(doc, tuple(str(p) for p in phrases)))
        elif require_labels:
            report.skipped_unlabeled.append(doc_id)
            continue
        else:
            items.append(doc)
        report.kept += 1
    return items, report
