"""Evaluation: ranked precision/recall, inter-judge agreement, significance.

All metrics are macro-averaged: computed per document, then averaged with
equal document weight. Phrase matching uses the shared normalization on both
sides; an optional stemmer flag exists for corpora annotated with inflected
variants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .inference import normalize_phrase


@dataclass
class MetricReport:
    precision: dict = field(default_factory=dict)  # depth -> macro P@depth
    recall: dict = field(default_factory=dict)
    f1: dict = field(default_factory=dict)
    documents: int = 0
    skipped: list = field(default_factory=list)

    def to_dict(self):
        return {
            "precision": {str(k): v for k, v in self.precision.items()},
            "recall": {str(k): v for k, v in self.recall.items()},
            "f1": {str(k): v for k, v in self.f1.items()},
            "documents": self.documents,
            "skipped": list(self.skipped),
        }

    def as_table(self):
        depths = sorted(self.precision)
        lines = ["depth  precision  recall"]
        for d in depths:
            lines.append(f"@{d:<5} {self.precision[d]:9.4f}  {self.recall[d]:7.4f}")
        for d in sorted(self.f1):
            lines.append(f"F1@{d:<4} {self.f1[d]:9.4f}")
        lines.append(f"documents: {self.documents} (skipped {len(self.skipped)})")
        return "\n".join(lines)


def _normalize_list(phrases, stem):
    out = []
    for p in phrases:
        n = normalize_phrase(p, stem=stem)
        if n:
            out.append(n)
    return out


def evaluate(predictions, gold, depths=(1, 3, 5), f1_depths=(10,), stem=False):
    """Macro P@k and R@k at each depth, plus macro F1 at the f1 depths.

    ``predictions`` maps doc id -> ranked phrase list; ``gold`` maps doc id ->
    gold phrase collection. Documents whose gold set normalizes to empty are
    skipped and recorded. A missing prediction list counts as empty (scores
    zero), not as a skip.
    """
    per_depth_p = {d: [] for d in depths}
    per_depth_r = {d: [] for d in depths}
    per_f1 = {d: [] for d in f1_depths}
    report = MetricReport()
    for doc_id in sorted(gold):
        gold_set = set(_normalize_list(gold[doc_id], stem))
        if not gold_set:
            report.skipped.append(doc_id)
            continue
        ranked = _normalize_list(predictions.get(doc_id, ()), stem)
        deduped = list(dict.fromkeys(ranked))
        report.documents += 1
        for d in depths:
            top = set(deduped[:d])
            hits = len(top & gold_set)
            per_depth_p[d].append(hits / d)
            per_depth_r[d].append(hits / len(gold_set))
        for d in per_f1:
            top = set(deduped[:d])
            hits = len(top & gold_set)
            p = hits / d
            r = hits / len(gold_set)
            per_f1[d].append(0.0 if hits == 0 else 2 * p * r / (p + r))
    if report.documents == 0:
        raise ValueError("no documents with usable gold keyphrases")
    for d in depths:
        report.precision[d] = float(np.mean(per_depth_p[d]))
        report.recall[d] = float(np.mean(per_depth_r[d]))
    for d in per_f1:
        report.f1[d] = float(np.mean(per_f1[d]))
    return report


def per_document_scores(predictions, gold, depth=1, stem=False):
    """P@depth per document, aligned over sorted doc ids (for paired tests)."""
    scores = []
    for doc_id in sorted(gold):
        gold_set = set(_normalize_list(gold[doc_id], stem))
        if not gold_set:
            continue
        ranked = list(dict.fromkeys(_normalize_list(predictions.get(doc_id, ()), stem)))
        scores.append(len(set(ranked[:depth]) & gold_set) / depth)
    return np.array(scores)


@dataclass
class AgreementReport:
    percentage: float
    pairs: int
    truncated_lists: int
    skipped_pairs: int


def judge_agreement(items, depth, mode="exact"):
    """Mean pairwise agreement between judges' top-``depth`` keyphrases.

    ``items`` is a list of documents, each a list of per-judge ranked phrase
    lists. Exact mode scores |top_A & top_B| / depth on normalized phrases.
    Unigram mode compares the word sets of the top lists, scoring
    |U_A & U_B| / min(|U_A|, |U_B|). Judges with fewer than ``depth`` entries
    are used truncated and counted. Returns a percentage in [0, 100].
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if mode not in ("exact", "unigram"):
        raise ValueError(f"unknown agreement mode {mode!r}")
    scores = []
    truncated = 0
    skipped = 0
    for judges in items:
        tops = []
        for ranked in judges:
            normalized = list(dict.fromkeys(_normalize_list(ranked, stem=False)))
            if len(normalized) < depth:
                truncated += 1
            tops.append(normalized[:depth])
        for a, b in combinations(tops, 2):
            if mode == "exact":
                scores.append(len(set(a) & set(b)) / depth)
            else:
                ua = {w for p in a for w in p.split()}
                ub = {w for p in b for w in p.split()}
                if not ua or not ub:
                    skipped += 1
                    continue
                scores.append(len(ua & ub) / min(len(ua), len(ub)))
    if not scores:
        raise ValueError("no judge pairs to compare")
    return AgreementReport(
        percentage=100.0 * float(np.mean(scores)),
        pairs=len(scores),
        truncated_lists=truncated,
        skipped_pairs=skipped,
    )


@dataclass
class PermutationResult:
    defined: bool
    p_value: float | None
    observed: float | None
    resamples: int
    significant: bool | None  # at the 0.05 level

    def summary(self):
        if not self.defined:
            return "permutation test undefined (fewer than 5 paired documents)"
        verdict = "significant" if self.significant else "not significant"
        return (
            f"mean difference {self.observed:+.4f}, "
            f"p = {self.p_value:.4f} ({verdict} at 0.05)"
        )


def permutation_test(scores_a, scores_b, resamples=10000, seed=0):
    """Two-sided paired sign-flip permutation test on per-document scores.

    The statistic is the mean per-document difference. Each resample flips
    the sign of every difference independently; the p-value is
    (1 + #{|t*| >= |t|}) / (1 + resamples). Fewer than 5 pairs is reported as
    undefined rather than a number nobody should trust.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("score vectors must be 1-d and aligned")
    if resamples < 1:
        raise ValueError("resamples must be positive")
    n = a.size
    if n < 5:
        return PermutationResult(False, None, None, resamples, None)
    diffs = a - b
    observed = float(diffs.mean())
    rng = np.random.default_rng(seed)
    # tiny slack so resampled |t*| that ties |t| (e.g. the identity flip)
    # always counts as at least as extreme despite float rounding
    threshold = abs(observed) - 1e-12
    hits = 0
    for _ in range(resamples):
        signs = rng.choice((-1.0, 1.0), size=n)
        if abs(float((diffs * signs).mean())) >= threshold:
            hits += 1
    p = (1 + hits) / (1 + resamples)
    return PermutationResult(True, p, observed, resamples, p < 0.05)
