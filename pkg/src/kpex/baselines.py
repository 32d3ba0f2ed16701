"""Unsupervised baselines: TFIDF span ranking and TextRank.

Both score the same candidate set as the neural model, filtered to plausible
phrases: no punctuation anywhere, no stopword at either boundary (interior
stopwords are fine, as in "state of the art"). TFIDF averages smoothed
tf*idf over the span's tokens; TextRank runs PageRank-style propagation over
a word co-occurrence graph and sums word scores over the span.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

from .documents import enumerate_spans
from .inference import Prediction, normalize_phrase

# standard English function words; override per corpus via load_stopwords
STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been
before being below between both but by can cannot could did do does doing down
during each few for from further had has have having he her here hers herself
him himself his how i if in into is it its itself just me more most my myself
no nor not now of off on once only or other our ours ourselves out over own
same she should so some such than that the their theirs them themselves then
there these they this those through to too under until up very was we were
what when where which while who whom why will with you your yours yourself
yourselves
""".split())

_WORD_RE = re.compile(r"\w")


def load_stopwords(path):
    words = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            word = line.strip().lower()
            if word and not word.startswith("#"):
                words.add(word)
    return frozenset(words)


def is_punctuation(token):
    return not _WORD_RE.search(token)


def candidate_filter(spans, doc, stopwords=STOPWORDS):
    """Drop spans with boundary stopwords or any punctuation token."""
    kept = []
    for span in spans:
        tokens = doc.tokens[span.start : span.stop]
        if tokens[0] in stopwords or tokens[-1] in stopwords:
            continue
        if any(is_punctuation(t) for t in tokens):
            continue
        kept.append(span)
    return kept


@dataclass(frozen=True, eq=False)
class CorpusStats:
    """Document frequencies for idf; built once over a corpus."""

    n_documents: int
    document_frequency: dict

    @classmethod
    def build(cls, documents):
        df = Counter()
        n = 0
        for doc in documents:
            n += 1
            df.update(set(doc.tokens))
        return cls(n, dict(df))

    def idf(self, token):
        # smoothed so unseen tokens stay finite and positive
        df = self.document_frequency.get(token, 0)
        return math.log((self.n_documents + 1) / (df + 1)) + 1.0


def tfidf_score(span, doc, stats, counts=None):
    """Mean tf*idf over the span tokens; tf is count / document length."""
    counts = counts or Counter(doc.tokens)
    n = len(doc)
    total = 0.0
    for token in doc.tokens[span.start : span.stop]:
        total += (counts[token] / n) * stats.idf(token)
    return total / span.length


def _rank_candidates(doc, spans, score_fn, top_k):
    scored = []
    for span in spans:
        scored.append((span, score_fn(span)))
    scored.sort(key=lambda pair: (-pair[1], pair[0].start, pair[0].length))
    ranked = []
    seen = set()
    for span, score in scored:
        phrase = normalize_phrase(doc.phrase(span))
        if phrase in seen:
            continue
        seen.add(phrase)
        ranked.append((phrase, float(score)))
        if len(ranked) == top_k:
            break
    return Prediction(doc.id, tuple(ranked))


def tfidf_rank(doc, stats, max_span_length=5, top_k=10, stopwords=STOPWORDS):
    spans = candidate_filter(enumerate_spans(len(doc), max_span_length), doc, stopwords)
    counts = Counter(doc.tokens)
    return _rank_candidates(
        doc, spans, lambda s: tfidf_score(s, doc, stats, counts), top_k
    )


@dataclass(frozen=True, eq=False)
class WordGraph:
    """Undirected weighted co-occurrence graph over candidate word types."""

    nodes: tuple
    weights: dict  # (u, v) -> weight, stored both ways

    def degree(self, node):
        return sum(w for (u, _), w in self.weights.items() if u == node)


def build_word_graph(doc, window=2, stopwords=STOPWORDS):
    """Connect candidate words co-occurring within ``window`` text positions.

    Two words co-occur when their token positions in the original text differ
    by less than ``window`` (the classic convention: window=2 links adjacent
    words). Candidates are non-stopword, non-punctuation token types; each
    co-occurrence adds 1 to the symmetric edge weight and self-loops (a type
    next to itself) are skipped.
    """
    if window < 2:
        raise ValueError("window must be at least 2")
    positions = [
        (i, t)
        for i, t in enumerate(doc.tokens)
        if t not in stopwords and not is_punctuation(t)
    ]
    nodes = tuple(sorted({t for _, t in positions}))
    weights = {}
    for a in range(len(positions)):
        i, u = positions[a]
        for b in range(a + 1, len(positions)):
            j, v = positions[b]
            if j - i >= window:
                break
            if u != v:
                weights[(u, v)] = weights.get((u, v), 0.0) + 1.0
                weights[(v, u)] = weights.get((v, u), 0.0) + 1.0
    return WordGraph(nodes, weights)


@dataclass
class PageRankResult:
    scores: dict
    iterations: int
    residual: float


def pagerank(graph, damping=0.85, tol=1e-8, max_iterations=200):
    """Weighted PageRank without normalization to a probability simplex.

    S(v) = (1 - d) + d * sum over in-neighbors u of w_uv / deg(u) * S(u),
    iterated from all-ones until the L1 change drops below ``tol``. Isolated
    nodes settle at 1 - d.
    """
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must be in (0, 1)")
    nodes = graph.nodes
    if not nodes:
        return PageRankResult({}, 0, 0.0)
    neighbors = {v: [] for v in nodes}
    degree = {v: 0.0 for v in nodes}
    for (u, v), w in graph.weights.items():
        neighbors[v].append((u, w))
        degree[u] += w
    scores = {v: 1.0 for v in nodes}
    residual = float("inf")
    for iteration in range(1, max_iterations + 1):
        updated = {}
        for v in nodes:
            incoming = sum(
                w / degree[u] * scores[u] for u, w in neighbors[v] if degree[u] > 0
            )
            updated[v] = (1.0 - damping) + damping * incoming
        residual = sum(abs(updated[v] - scores[v]) for v in nodes)
        scores = updated
        if residual < tol:
            return PageRankResult(scores, iteration, residual)
    return PageRankResult(scores, max_iterations, residual)


def textrank_scores(doc, window=2, damping=0.85, tol=1e-8, stopwords=STOPWORDS):
    """Converged word scores for one document (empty dict if no candidates)."""
    graph = build_word_graph(doc, window=window, stopwords=stopwords)
    return pagerank(graph, damping=damping, tol=tol).scores


def textrank_rank(
    doc,
    max_span_length=5,
    top_k=10,
    window=2,
    damping=0.85,
    stopwords=STOPWORDS,
):
    """Rank candidate spans by the sum of their words' TextRank scores."""
    scores = textrank_scores(doc, window=window, damping=damping, stopwords=stopwords)
    spans = candidate_filter(enumerate_spans(len(doc), max_span_length), doc, stopwords)

    def span_score(span):
        return sum(scores.get(t, 0.0) for t in doc.tokens[span.start : span.stop])

    return _rank_candidates(doc, spans, span_score, top_k)
