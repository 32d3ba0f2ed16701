"""Weak supervision from search query logs.

Documents paired with the queries that led clicks to them become pretraining
examples: a query survives the filter only if its token sequence occurs
verbatim inside the (truncated) document and is at most K tokens long. The
surviving queries train the same span objective as gold keyphrases, with the
target spread uniformly over every occurrence of every surviving query.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import mean, pstdev

from .documents import (
    MAX_DOC_LENGTH,
    MAX_SPAN_LENGTH,
    SpanTarget,
    match_phrase,
    tokenize,
    truncate,
)
from .fileio import DatasetError, read_jsonl


def read_query_log(path):
    """Load a JSONL click log of {"id": str, "queries": [str, ...]}."""
    log = {}
    for lineno, obj in read_jsonl(path):
        if not isinstance(obj, dict) or "id" not in obj or "queries" not in obj:
            raise DatasetError(f"{path}:{lineno}: expected id and queries")
        doc_id = str(obj["id"])
        if doc_id in log:
            raise DatasetError(f"{path}:{lineno}: duplicate id {doc_id!r}")
        log[doc_id] = [str(q) for q in obj["queries"]]
    return log


def filter_queries(doc, queries, max_span_length=MAX_SPAN_LENGTH, blocklist=None):
    """Split queries into (kept, dropped) against a truncated document.

    Kept entries are (query, occurrence spans) with duplicates collapsed;
    dropped entries are (query, reason) with reason one of "empty",
    "blocked", "too_long", "not_verbatim", "duplicate".
    """
    blocklist = blocklist or frozenset()
    kept = []
    dropped = []
    seen = set()
    for query in queries:
        tokens = tuple(tokenize(query))
        if not tokens:
            dropped.append((query, "empty"))
            continue
        if tokens in seen:
            dropped.append((query, "duplicate"))
            continue
        seen.add(tokens)
        if " ".join(tokens) in blocklist:
            dropped.append((query, "blocked"))
            continue
        if len(tokens) > max_span_length:
            dropped.append((query, "too_long"))
            continue
        spans = match_phrase(doc, query)
        if not spans:
            dropped.append((query, "not_verbatim"))
            continue
        kept.append((query, spans))
    return kept, dropped


@dataclass(frozen=True, eq=False)
class QueryPredictionExample:
    document: object
    queries: tuple
    target: SpanTarget


@dataclass
class QueryDatasetStats:
    """Corpus statistics over the surviving query-prediction examples."""

    n_documents: int = 0
    n_unique_queries: int = 0
    doc_length: tuple = (0.0, 0.0)  # mean, population std
    queries_per_doc: tuple = (0.0, 0.0)
    query_length: tuple = (0.0, 0.0)
    doc_vocabulary: int = 0
    query_vocabulary: int = 0
    dropped: dict = field(default_factory=dict)

    def as_table(self):
        rows = [
            ("# of Documents", f"{self.n_documents}"),
            ("# of Unique Queries", f"{self.n_unique_queries}"),
            ("Doc Length", f"{self.doc_length[0]:.2f} +/- {self.doc_length[1]:.2f}"),
            ("# of Query per Doc",
             f"{self.queries_per_doc[0]:.2f} +/- {self.queries_per_doc[1]:.2f}"),
            ("Query Length",
             f"{self.query_length[0]:.2f} +/- {self.query_length[1]:.2f}"),
            ("Doc Vocabulary Size", f"{self.doc_vocabulary}"),
            ("Query Vocabulary Size", f"{self.query_vocabulary}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)

    def to_dict(self):
        return {
            "n_documents": self.n_documents,
            "n_unique_queries": self.n_unique_queries,
            "doc_length_mean": self.doc_length[0],
            "doc_length_std": self.doc_length[1],
            "queries_per_doc_mean": self.queries_per_doc[0],
            "queries_per_doc_std": self.queries_per_doc[1],
            "query_length_mean": self.query_length[0],
            "query_length_std": self.query_length[1],
            "doc_vocabulary_size": self.doc_vocabulary,
            "query_vocabulary_size": self.query_vocabulary,
            "dropped": dict(self.dropped),
        }


def _mean_std(values):
    if not values:
        return (0.0, 0.0)
    return (float(mean(values)), float(pstdev(values)))


def build_qp_dataset(
    documents,
    query_log,
    max_span_length=MAX_SPAN_LENGTH,
    max_doc_length=MAX_DOC_LENGTH,
    blocklist=None,
):
    """Join documents with their clicked queries into weak span supervision.

    ``documents`` maps nothing special: any iterable of Documents; ids absent
    from the log, and documents where every query drops out, are skipped.
    Returns (examples, QueryDatasetStats). Statistics describe the kept
    examples; document length is measured before truncation.
    """
    examples = []
    doc_lengths = []
    query_counts = []
    query_lengths = []
    doc_vocab = set()
    query_vocab = set()
    unique_queries = set()
    dropped = {}
    for doc in documents:
        queries = query_log.get(doc.id)
        if not queries:
            continue
        clipped = truncate(doc, max_doc_length)
        kept, drops = filter_queries(clipped, queries, max_span_length, blocklist)
        for _, reason in drops:
            dropped[reason] = dropped.get(reason, 0) + 1
        if not kept:
            continue
        spans = sorted(
            {span for _, occurrences in kept for span in occurrences},
            key=lambda s: (s.length, s.start),
        )
        examples.append(
            QueryPredictionExample(
                clipped,
                tuple(q for q, _ in kept),
                SpanTarget(tuple(spans)),
            )
        )
        doc_lengths.append(len(doc))
        query_counts.append(len(kept))
        doc_vocab.update(doc.tokens)
        for query, _ in kept:
            tokens = tokenize(query)
            query_lengths.append(len(tokens))
            query_vocab.update(tokens)
            unique_queries.add(" ".join(tokens))
    stats = QueryDatasetStats(
        n_documents=len(examples),
        n_unique_queries=len(unique_queries),
        doc_length=_mean_std(doc_lengths),
        queries_per_doc=_mean_std(query_counts),
        query_length=_mean_std(query_lengths),
        doc_vocabulary=len(doc_vocab),
        query_vocabulary=len(query_vocab),
        dropped=dropped,
    )
    return examples, stats


def load_blocklist(path):
    """One normalized query per line; blank lines and # comments ignored."""
    entries = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            entries.add(" ".join(tokenize(line)))
    return frozenset(entries)
