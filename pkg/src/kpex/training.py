"""Training loop shared by supervised finetuning and query-log pretraining.

Both paths minimize the same loss: cross-entropy between the joint span
softmax and a uniform distribution over the gold (or query-matched) spans.
Documents are truncated, grouped into fixed-size batches of similar length,
and optimized with Adam under a geometrically decaying learning rate. Runs
are reproducible: one seed fixes shuffling, dropout, and initialization
downstream, so identical seeds give identical loss curves.
"""

from __future__ import annotations

import json
import math
import os
import shutil
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import no_grad, softmax_cross_entropy
from .documents import MAX_DOC_LENGTH, build_labels, span_index, truncate
from .fileio import write_json
from .optim import Adam, geometric_lr


@dataclass(frozen=True)
class TrainingConfig:
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 10
    validation_fraction: float = 0.1
    max_doc_length: int = MAX_DOC_LENGTH
    seed: int = 0
    total_steps: int | None = None  # schedule horizon; default = planned steps

    def __post_init__(self):
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ValueError("learning rates must be positive")
        if self.lr_end > self.lr_start:
            raise ValueError("lr_end must not exceed lr_start")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")


@dataclass(frozen=True, eq=False)
class TrainingExample:
    """A truncated document paired with its aligned span target."""

    document: object
    target: object  # SpanTarget


def keyphrase_loss(model, example, train=False, rng=None):
    """Cross-entropy of the joint span softmax against the uniform target."""
    doc = example.document
    logits, spans = model.forward(doc, train=train, rng=rng)
    dense = example.target.dense(len(doc), model.config.max_span_length)
    if len(dense) != logits.size:
        raise ValueError("target length does not match candidate count")
    return softmax_cross_entropy(logits, dense)


# Query prediction optimizes the identical objective; the separate name keeps
# call sites honest about which supervision source they run on.
query_prediction_loss = keyphrase_loss


@dataclass
class PreparationReport:
    prepared: int = 0
    skipped_no_match: list = field(default_factory=list)
    phrases_too_long: int = 0
    phrases_unmatched: int = 0


def prepare_examples(labeled_docs, max_span_length, max_doc_length=MAX_DOC_LENGTH):
    """Truncate, align labels, and drop documents with no matchable phrase."""
    examples = []
    report = PreparationReport()
    for item in labeled_docs:
        doc = truncate(item.document, max_doc_length)
        clipped = type(item)(doc, item.keyphrases)
        target, label_report = build_labels(clipped, max_span_length)
        report.phrases_too_long += len(label_report.too_long)
        report.phrases_unmatched += len(label_report.unmatched)
        if target is None:
            report.skipped_no_match.append(doc.id)
            continue
        for span in target.spans:
            span_index(len(doc), span)  # sanity: every span in range
        examples.append(TrainingExample(doc, target))
        report.prepared += 1
    return examples, report


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None
    lr_last: float
    seconds: float

    def to_dict(self):
        return self.__dict__.copy()


@dataclass
class TrainRunRecord:
    epochs: list
    best_epoch: int | None
    best_val_loss: float | None
    steps: int
    preparation: PreparationReport | None = None


def _length_batches(examples, batch_size, rng):
    """Batches of similar length: sort by token count, slice, shuffle order."""
    ordered = sorted(examples, key=lambda ex: len(ex.document))
    batches = [
        ordered[i : i + batch_size] for i in range(0, len(ordered), batch_size)
    ]
    rng.shuffle(batches)
    return batches


def _mean_loss(model, batch, train, rng):
    total = None
    for ex in batch:
        loss = keyphrase_loss(model, ex, train=train, rng=rng)
        total = loss if total is None else total + loss
    return total * (1.0 / len(batch))


def run_training(model, examples, config, run_dir=None, log=None, checkpoint_metadata=None):
    """Optimize ``model`` on prepared examples; returns a TrainRunRecord.

    When ``run_dir`` is given the loop writes config.json, per-epoch
    metrics.jsonl, one checkpoint per epoch, and a ``best.ckpt`` copy of the
    epoch with the lowest validation loss (training loss when no validation
    split exists). ``checkpoint_metadata`` is merged into every checkpoint's
    metadata block. Non-finite losses abort with the failing step in the error.
    """
    if not examples:
        raise ValueError("no training examples after preparation")
    rng = np.random.default_rng(config.seed)
    examples = list(examples)
    order = rng.permutation(len(examples))
    examples = [examples[i] for i in order]
    n_val = int(len(examples) * config.validation_fraction)
    val_set = examples[:n_val]
    train_set = examples[n_val:]
    if not train_set:
        raise ValueError("validation split consumed every example")

    steps_per_epoch = math.ceil(len(train_set) / config.batch_size)
    total_steps = config.total_steps or steps_per_epoch * config.max_epochs
    optimizer = Adam(model.registry)
    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
        write_json(
            os.path.join(run_dir, "config.json"),
            {"training": config.__dict__.copy(), "model": model.config.to_dict()},
        )
    metrics_path = os.path.join(run_dir, "metrics.jsonl") if run_dir else None
    if metrics_path and os.path.exists(metrics_path):
        os.unlink(metrics_path)

    record = TrainRunRecord(epochs=[], best_epoch=None, best_val_loss=None, steps=0)
    step = 0
    for epoch in range(1, config.max_epochs + 1):
        started = time.monotonic()
        epoch_losses = []
        for batch in _length_batches(train_set, config.batch_size, rng):
            model.registry.clear_grads()
            loss = _mean_loss(model, batch, train=True, rng=rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise RuntimeError(f"non-finite training loss at step {step}")
            loss.backward()
            optimizer.step(geometric_lr(step, total_steps, config.lr_start, config.lr_end))
            step += 1
            epoch_losses.append(value)
        lr_last = geometric_lr(step - 1, total_steps, config.lr_start, config.lr_end)

        val_loss = None
        if val_set:
            with no_grad():
                val_loss = float(
                    np.mean([float(_mean_loss(model, [ex], False, None).data)
                             for ex in val_set])
                )
        stats = EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(epoch_losses)),
            val_loss=val_loss,
            lr_last=lr_last,
            seconds=time.monotonic() - started,
        )
        record.epochs.append(stats)
        record.steps = step
        if log:
            log(stats)

        selection = val_loss if val_loss is not None else stats.train_loss
        is_best = record.best_val_loss is None or selection < record.best_val_loss
        if is_best:
            record.best_val_loss = selection
            record.best_epoch = epoch
        if run_dir:
            with open(metrics_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(stats.to_dict()) + "\n")
            epoch_path = os.path.join(run_dir, f"epoch{epoch}.ckpt")
            extra = dict(checkpoint_metadata or {})
            extra["epoch"] = epoch
            model.save(epoch_path, extra_metadata=extra)
            if is_best:
                shutil.copyfile(epoch_path, os.path.join(run_dir, "best.ckpt"))
    return record
