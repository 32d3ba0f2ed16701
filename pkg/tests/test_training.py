"""Training loop: loss values, determinism, batching, and run artifacts."""

import json
import math
import os

import numpy as np
import pytest

from kpex.documents import (
    LabeledDocument,
    Span,
    SpanTarget,
    count_spans,
    make_document,
)
from kpex.embedding import EmbeddingConfig, TokenVocabulary
from kpex.model import ModelConfig, SpanScorer
from kpex.training import (
    TrainingConfig,
    TrainingExample,
    keyphrase_loss,
    prepare_examples,
    query_prediction_loss,
    run_training,
    _length_batches,
)

VOCAB_TOKENS = tuple(f"w{i}" for i in range(12))


def _config(**overrides):
    defaults = dict(
        filters=8,
        heads=2,
        layers=1,
        dropout=0.0,
        embedding=EmbeddingConfig(token_dim=6, position_dim=4),
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)


def _model(seed=0, **overrides):
    return SpanScorer(_config(**overrides), vocab=TokenVocabulary(VOCAB_TOKENS), seed=seed)


def _corpus(n_docs=12, doc_len=8, seed=0):
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n_docs):
        tokens = [f"w{rng.integers(0, 12)}" for _ in range(doc_len)]
        doc = make_document(f"doc{i}", " ".join(tokens))
        start = int(rng.integers(0, doc_len - 1))
        examples.append(TrainingExample(doc, SpanTarget((Span(start, 2),))))
    return examples


class TestLossValues:
    def test_uniform_model_single_target_is_log_m(self):
        # zero every parameter that feeds the scorer output so logits are flat
        model = _model()
        for name in ("scorer/w3", "scorer/b3"):
            model.registry[name].data[:] = 0.0
        doc = make_document("d", " ".join(["w0"] * 12))
        ex = TrainingExample(doc, SpanTarget((Span(0, 1),)))
        loss = keyphrase_loss(model, ex)
        assert float(loss.data) == pytest.approx(math.log(50), abs=1e-9)

    def test_two_span_uniform_target(self):
        model = _model()
        for name in ("scorer/w3", "scorer/b3"):
            model.registry[name].data[:] = 0.0
        doc = make_document("d", " ".join(["w0"] * 12))
        ex = TrainingExample(doc, SpanTarget((Span(0, 1), Span(3, 2))))
        loss = keyphrase_loss(model, ex)
        assert float(loss.data) == pytest.approx(math.log(50), abs=1e-9)

    def test_query_loss_is_same_function(self):
        assert query_prediction_loss is keyphrase_loss

    def test_target_length_mismatch(self):
        model = _model()
        doc = make_document("d", "w0 w1 w2")

        class FakeTarget:
            def dense(self, n, k):
                return np.full(99, 1 / 99)

        with pytest.raises(ValueError, match="candidate count"):
            keyphrase_loss(model, TrainingExample(doc, FakeTarget()))

    def test_loss_decreases_under_adam(self):
        model = _model()
        examples = _corpus(n_docs=8)
        config = TrainingConfig(
            max_epochs=12, batch_size=4, validation_fraction=0.0, lr_start=5e-3,
            lr_end=1e-3,
        )
        record = run_training(model, examples, config)
        assert record.epochs[-1].train_loss < record.epochs[0].train_loss * 0.7


class TestPrepareExamples:
    def test_alignment_and_truncation(self):
        doc = make_document("d", " ".join(f"w{i % 12}" for i in range(20)))
        labeled = LabeledDocument(doc, ("w1 w2",))
        examples, report = prepare_examples([labeled], 5, max_doc_length=10)
        assert report.prepared == 1
        assert len(examples[0].document) == 10
        assert all(s.stop <= 10 for s in examples[0].target.spans)

    def test_unmatched_document_skipped(self):
        doc = make_document("d", "w0 w1")
        labeled = LabeledDocument(doc, ("w9 w9",))
        examples, report = prepare_examples([labeled], 5)
        assert examples == []
        assert report.skipped_no_match == ["d"]
        assert report.phrases_unmatched == 1

    def test_too_long_phrase_counted(self):
        doc = make_document("d", "w0 w1 w2 w3 w4 w5 w0 w1")
        labeled = LabeledDocument(doc, ("w0 w1 w2 w3 w4 w5", "w0 w1"))
        examples, report = prepare_examples([labeled], 5)
        assert report.phrases_too_long == 1
        assert report.prepared == 1


class TestBatching:
    def test_batches_group_similar_lengths(self):
        examples = []
        for i, n in enumerate((3, 9, 4, 8, 3, 9)):
            doc = make_document(f"d{i}", " ".join(["w0"] * n))
            examples.append(TrainingExample(doc, SpanTarget((Span(0, 1),))))
        rng = np.random.default_rng(0)
        batches = _length_batches(examples, 2, rng)
        assert sorted(len(b) for b in batches) == [2, 2, 2]
        by_len = sorted(
            tuple(sorted(len(ex.document) for ex in b)) for b in batches
        )
        assert by_len == [(3, 3), (4, 8), (9, 9)]

    def test_all_examples_survive_batching(self):
        examples = _corpus(n_docs=10)
        rng = np.random.default_rng(1)
        batches = _length_batches(examples, 3, rng)
        flat = {ex.document.id for b in batches for ex in b}
        assert flat == {ex.document.id for ex in examples}


class TestRunTraining:
    def test_identical_seeds_identical_curves(self):
        config = TrainingConfig(max_epochs=3, batch_size=4, lr_start=1e-3)
        losses = []
        for _ in range(2):
            record = run_training(_model(), _corpus(), config)
            losses.append([e.train_loss for e in record.epochs])
        assert losses[0] == losses[1]

    def test_different_seed_different_curve(self):
        base = TrainingConfig(max_epochs=2, batch_size=4)
        other = TrainingConfig(max_epochs=2, batch_size=4, seed=7)
        a = run_training(_model(), _corpus(), base)
        b = run_training(_model(), _corpus(), other)
        assert [e.train_loss for e in a.epochs] != [e.train_loss for e in b.epochs]

    def test_validation_split_size(self):
        config = TrainingConfig(max_epochs=1, batch_size=4, validation_fraction=0.25)
        record = run_training(_model(), _corpus(n_docs=12), config)
        assert record.epochs[0].val_loss is not None
        # 9 train examples -> ceil(9/4) = 3 steps
        assert record.steps == 3

    def test_run_dir_artifacts(self, tmp_path):
        run_dir = str(tmp_path / "run")
        config = TrainingConfig(max_epochs=2, batch_size=4)
        record = run_training(
            _model(), _corpus(), config, run_dir=run_dir,
            checkpoint_metadata={"phase": "finetune"},
        )
        names = sorted(os.listdir(run_dir))
        assert names == ["best.ckpt", "config.json", "epoch1.ckpt", "epoch2.ckpt",
                         "metrics.jsonl"]
        with open(os.path.join(run_dir, "metrics.jsonl")) as fh:
            lines = [json.loads(line) for line in fh]
        assert [l["epoch"] for l in lines] == [1, 2]
        assert all("train_loss" in l and "lr_last" in l for l in lines)
        loaded, meta = SpanScorer.load(os.path.join(run_dir, "best.ckpt"))
        assert meta["phase"] == "finetune"
        assert meta["epoch"] == record.best_epoch

    def test_best_checkpoint_tracks_lowest_val(self, tmp_path):
        run_dir = str(tmp_path / "run")
        config = TrainingConfig(max_epochs=4, batch_size=4, lr_start=5e-3, lr_end=1e-3)
        record = run_training(_model(), _corpus(), config, run_dir=run_dir)
        vals = [e.val_loss for e in record.epochs]
        assert record.best_val_loss == min(vals)
        assert record.best_epoch == vals.index(min(vals)) + 1

    def test_log_callback_sees_every_epoch(self):
        seen = []
        config = TrainingConfig(max_epochs=3, batch_size=4)
        run_training(_model(), _corpus(), config, log=seen.append)
        assert [s.epoch for s in seen] == [1, 2, 3]

    def test_empty_examples_rejected(self):
        with pytest.raises(ValueError, match="no training examples"):
            run_training(_model(), [], TrainingConfig())

    def test_lr_schedule_spans_run(self):
        config = TrainingConfig(
            max_epochs=2, batch_size=4, lr_start=1e-2, lr_end=1e-3,
            validation_fraction=0.0,
        )
        record = run_training(_model(), _corpus(n_docs=8), config)
        # 8 docs, batch 4 -> 2 steps/epoch, 4 total; last step uses step=3 of 4
        assert record.steps == 4
        assert record.epochs[-1].lr_last == pytest.approx(
            math.exp(math.log(1e-2) + (3 / 4) * (math.log(1e-3) - math.log(1e-2)))
        )

    def test_nonfinite_loss_aborts_with_step(self, monkeypatch):
        import kpex.training as training_mod
        from kpex.autodiff import Tensor

        monkeypatch.setattr(
            training_mod, "keyphrase_loss",
            lambda model, example, train=False, rng=None: Tensor(np.array(np.nan)),
        )
        with pytest.raises(RuntimeError, match="step 0"):
            run_training(_model(), _corpus(), TrainingConfig(max_epochs=1))

    def test_nonfinite_weights_caught_in_graph(self):
        model = _model()
        model.registry["scorer/w3"].data[:] = np.inf
        with np.errstate(invalid="ignore"):
            with pytest.raises(ValueError, match="non-finite"):
                run_training(model, _corpus(), TrainingConfig(max_epochs=1))


class TestTrainingConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainingConfig(lr_start=0.0)
        with pytest.raises(ValueError):
            TrainingConfig(lr_start=1e-4, lr_end=1e-3)
        with pytest.raises(ValueError):
            TrainingConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainingConfig(validation_fraction=1.0)
