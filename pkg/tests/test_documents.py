"""Tokenizer, span enumeration, label alignment, and dataset ingestion."""

import json

import numpy as np
import pytest

from kpex.documents import (
    VISUAL_DIM,
    Document,
    LabeledDocument,
    Span,
    SpanTarget,
    build_labels,
    count_spans,
    enumerate_spans,
    make_document,
    match_phrase,
    read_dataset,
    span_index,
    tokenize,
    truncate,
)
from kpex.fileio import DatasetError


class TestTokenize:
    def test_alphanumerics_stay_whole(self):
        assert tokenize("Bostitch 651S5 Stapler") == ["bostitch", "651s5", "stapler"]

    def test_punctuation_detached(self):
        assert tokenize("A,B") == ["a", ",", "b"]

    def test_empty_and_whitespace(self):
        assert tokenize("") == []
        assert tokenize(" \t\n ") == []

    def test_mixed_sample(self):
        assert tokenize("It's state-of-the-art!") == [
            "it", "'", "s", "state", "-", "of", "-", "the", "-", "art", "!",
        ]


def _doc(tokens, doc_id="d"):
    return Document(doc_id, tuple(tokens), np.zeros((len(tokens), VISUAL_DIM)))


class TestDocument:
    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="no tokens"):
            _doc([])

    def test_rejects_misaligned_visual(self):
        with pytest.raises(ValueError, match="visual shape"):
            Document("d", ("a", "b"), np.zeros((3, VISUAL_DIM)))

    def test_make_document_zero_fills_missing_visual(self):
        doc = make_document("d", "hello world")
        assert doc.zero_visual
        np.testing.assert_array_equal(doc.visual, np.zeros((2, VISUAL_DIM)))

    def test_make_document_empty_text_returns_none(self):
        assert make_document("d", "") is None
        assert make_document("d", "  \n ") is None

    def test_phrase(self):
        doc = _doc(["protein", "synthesis", "rate"])
        assert doc.phrase(Span(0, 2)) == "protein synthesis"


class TestTruncate:
    def test_long_document_clipped(self):
        doc = _doc([f"w{i}" for i in range(300)])
        clipped = truncate(doc)
        assert len(clipped) == 256
        assert clipped.visual.shape == (256, VISUAL_DIM)

    def test_short_document_untouched(self):
        doc = _doc([f"w{i}" for i in range(100)])
        assert truncate(doc) is doc

    def test_visual_rows_in_lockstep(self):
        visual = np.arange(10 * VISUAL_DIM, dtype=float).reshape(10, VISUAL_DIM)
        doc = Document("d", tuple(f"w{i}" for i in range(10)), visual)
        clipped = truncate(doc, 4)
        np.testing.assert_array_equal(clipped.visual, visual[:4])


class TestEnumerateSpans:
    def test_counting_cases(self):
        assert len(enumerate_spans(6, 3)) == 15
        assert len(enumerate_spans(3, 5)) == 6
        assert len(enumerate_spans(1, 5)) == 1
        assert len(enumerate_spans(12, 5)) == 50

    def test_ordering_by_length_then_start(self):
        spans = enumerate_spans(3, 2)
        assert spans == [Span(0, 1), Span(1, 1), Span(2, 1), Span(0, 2), Span(1, 2)]

    def test_count_formula_matches(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 40))
            k = int(rng.integers(1, 8))
            assert count_spans(n, k) == len(enumerate_spans(n, k))

    def test_span_index_matches_enumeration(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(1, 30))
            k = int(rng.integers(1, 7))
            spans = enumerate_spans(n, k)
            for i, span in enumerate(spans):
                assert span_index(n, span) == i

    def test_span_out_of_range(self):
        with pytest.raises(ValueError, match="exceeds"):
            span_index(4, Span(3, 2))


class TestMatchPhrase:
    def test_multiple_occurrences(self):
        doc = _doc(["protein", "synthesis", "and", "protein"])
        assert match_phrase(doc, "protein") == [Span(0, 1), Span(3, 1)]

    def test_absent_phrase(self):
        doc = _doc(["protein", "synthesis"])
        assert match_phrase(doc, "dna") == []

    def test_bigram(self):
        doc = _doc(["protein", "synthesis", "and", "protein"])
        assert match_phrase(doc, "protein synthesis") == [Span(0, 2)]

    def test_normalization_shared_with_tokenizer(self):
        doc = _doc(["bostitch", "651s5", "stapler"])
        assert match_phrase(doc, "Bostitch 651S5") == [Span(0, 2)]

    def test_empty_phrase_rejected(self):
        with pytest.raises(ValueError, match="tokenizes to nothing"):
            match_phrase(_doc(["a"]), "   ")


class TestBuildLabels:
    def test_two_positives_half_mass_each(self):
        doc = _doc(["a", "b", "c", "d"])
        target, report = build_labels(LabeledDocument(doc, ("a", "c d")))
        assert report.matched == 2
        dense = target.dense(4, 5)
        np.testing.assert_allclose(dense.sum(), 1.0)
        assert dense[span_index(4, Span(0, 1))] == 0.5
        assert dense[span_index(4, Span(2, 2))] == 0.5

    def test_repeated_occurrence_thirds(self):
        doc = _doc(["x", "y", "x", "z"])
        target, _ = build_labels(LabeledDocument(doc, ("x", "z")))
        dense = target.dense(4, 5)
        hits = dense[dense > 0]
        np.testing.assert_allclose(hits, [1 / 3, 1 / 3, 1 / 3])

    def test_phrase_beyond_truncation_skips_document(self):
        doc = truncate(_doc([f"w{i}" for i in range(300)]), 256)
        target, report = build_labels(LabeledDocument(doc, ("w299",)))
        assert target is None
        assert report.unmatched == ["w299"]

    def test_too_long_phrase_counted_separately(self):
        doc = _doc(["a", "b", "c", "d", "e", "f", "g"])
        target, report = build_labels(LabeledDocument(doc, ("a b c d e f",)))
        assert target is None
        assert report.too_long == ["a b c d e f"]

    def test_span_target_requires_spans(self):
        with pytest.raises(ValueError):
            SpanTarget(())


class TestReadDataset:
    def _write(self, tmp_path, lines):
        path = tmp_path / "data.jsonl"
        path.write_text("".join(json.dumps(obj) + "\n" for obj in lines))
        return str(path)

    def test_reads_labeled_and_unlabeled(self, tmp_path):
        visual = [[0.5] * VISUAL_DIM] * 2
        path = self._write(tmp_path, [
            {"id": "a", "text": "hello world", "visual": visual,
             "keyphrases": ["hello"]},
            {"id": "b", "text": "plain doc"},
        ])
        items, report = read_dataset(path)
        assert report.kept == 2
        assert isinstance(items[0], LabeledDocument)
        assert isinstance(items[1], Document)
        assert report.zero_visual == ["b"]

    def test_empty_text_counted_skip(self, tmp_path):
        path = self._write(tmp_path, [
            {"id": "a", "text": "   "},
            {"id": "b", "text": "fine"},
        ])
        items, report = read_dataset(path)
        assert len(items) == 1
        assert report.skipped_empty == ["a"]

    def test_wrong_visual_width_rejected(self, tmp_path):
        path = self._write(tmp_path, [
            {"id": "a", "text": "one two", "visual": [[0.1] * 17] * 2},
        ])
        with pytest.raises(DatasetError, match="visual"):
            read_dataset(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = self._write(tmp_path, [
            {"id": "a", "text": "x"},
            {"id": "a", "text": "y"},
        ])
        with pytest.raises(DatasetError, match="duplicate"):
            read_dataset(path)

    def test_bad_json_line_located(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text('{"id": "a", "text": "x"}\n{oops\n')
        with pytest.raises(DatasetError, match=":2:"):
            read_dataset(str(path))

    def test_require_labels_drops_unlabeled(self, tmp_path):
        path = self._write(tmp_path, [
            {"id": "a", "text": "x y", "keyphrases": ["x"]},
            {"id": "b", "text": "plain"},
        ])
        items, report = read_dataset(path, require_labels=True)
        assert [it.document.id for it in items] == ["a"]
        assert report.skipped_unlabeled == ["b"]

    def test_visual_values_clamped(self, tmp_path):
        visual = [[1.5] * VISUAL_DIM, [-0.5] * VISUAL_DIM]
        path = self._write(tmp_path, [{"id": "a", "text": "x y", "visual": visual}])
        items, _ = read_dataset(path)
        assert items[0].visual.max() == 1.0
        assert items[0].visual.min() == 0.0
