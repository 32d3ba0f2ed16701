"""Span classification model over n-gram candidates.

Every candidate span (start i, length k <= K) becomes one logit: a width-k
convolution bank turns the token embeddings into k-gram representations, a
single transformer encoder (its parameters shared across all k) contextualizes
each k-gram sequence, and a shared feedforward scorer maps each position to a
scalar. One joint softmax over every (i, k) pair yields the span distribution,
so location and length compete in the same normalization.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .documents import count_spans, enumerate_spans
from .embedding import (
    EmbeddingConfig,
    TokenVocabulary,
    TrainableLookup,
    embed_document,
)
from .registry import (
    ParameterRegistry,
    load_checkpoint,
    save_checkpoint,
    xavier_uniform,
)


@dataclass(frozen=True)
class ModelConfig:
    max_span_length: int = 5
    filters: int = 64
    heads: int = 2
    layers: int = 1
    dropout: float = 0.2
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    no_transformer: bool = False
    no_position: bool = False
    no_visual: bool = False

    def __post_init__(self):
        if self.max_span_length < 1:
            raise ValueError("max_span_length must be at least 1")
        if self.filters < 1:
            raise ValueError("filters must be positive")
        if self.layers < 0:
            raise ValueError("layers must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.heads < 1 or self.filters % self.heads != 0:
            raise ValueError(
                f"filters {self.filters} not divisible by heads {self.heads}"
            )

    def to_dict(self):
        d = self.__dict__.copy()
        d["embedding"] = self.embedding.__dict__.copy()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["embedding"] = EmbeddingConfig(**d["embedding"])
        return cls(**d)


def full_scale_config():
    """The full-size configuration: 512 filters, 8 heads, 256-dim positions."""
    return ModelConfig(
        filters=512,
        heads=8,
        embedding=EmbeddingConfig(token_dim=1024, position_dim=256, source="frozen"),
    )


@dataclass(frozen=True, eq=False)
class SpanDistribution:
    """Softmax output: candidate spans, their probabilities, and the mask."""

    spans: tuple
    probs: np.ndarray
    mask: np.ndarray


def score_spans(logits, mask=None):
    """Joint softmax over all candidate logits with optional masking.

    ``mask`` marks scorable spans with True; masked spans get exactly
    probability 0 (they are excluded from the normalization, not just given
    tiny weight). All-masked input is an error.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if mask is None:
        mask = np.ones(logits.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != logits.shape:
            raise ValueError("mask shape does not match logits")
    if not mask.any():
        raise ValueError("every candidate span is masked")
    probs = np.zeros_like(logits)
    kept = logits[mask]
    shifted = np.exp(kept - kept.max())
    probs[mask] = shifted / shifted.sum()
    return probs, mask


class SpanScorer:
    """The end-to-end span classifier with a named parameter registry."""

    def __init__(self, config, vocab=None, frozen_vectors=None, seed=0):
        self.config = config
        self.vocab = vocab
        self.frozen_vectors = frozen_vectors
        self.registry = ParameterRegistry()
        rng = np.random.default_rng(seed)
        emb = config.embedding
        if emb.source == "trainable":
            if vocab is None:
                raise ValueError("trainable embeddings need a vocabulary")
            table = self.registry.add(
                "embedding/tokens",
                rng.normal(0.0, 0.1, size=(len(vocab), emb.token_dim)),
            )
            self.source = TrainableLookup(vocab, table)
        else:
            if frozen_vectors is None:
                raise ValueError("frozen embedding source needs loaded vectors")
            if frozen_vectors.token_dim != emb.token_dim:
                raise ValueError("frozen vector width != embedding token_dim")
            self.source = frozen_vectors

        d_in = emb.width
        f = config.filters
        for k in range(1, config.max_span_length + 1):
            self.registry.add(f"cnn/k{k}/weight", xavier_uniform(rng, (k * d_in, f)))
            self.registry.add(f"cnn/k{k}/bias", np.zeros(f))
        for layer in range(config.layers):
            base = f"transformer/layer{layer}"
            for name in ("wq", "wk", "wv", "wo"):
                self.registry.add(f"{base}/attention/{name}", xavier_uniform(rng, (f, f)))
            for name in ("bq", "bk", "bv", "bo"):
                self.registry.add(f"{base}/attention/{name}", np.zeros(f))
            self.registry.add(f"{base}/attention_norm/scale", np.ones(f))
            self.registry.add(f"{base}/attention_norm/shift", np.zeros(f))
            self.registry.add(f"{base}/ffn/w1", xavier_uniform(rng, (f, f)))
            self.registry.add(f"{base}/ffn/b1", np.zeros(f))
            self.registry.add(f"{base}/ffn/w2", xavier_uniform(rng, (f, f)))
            self.registry.add(f"{base}/ffn/b2", np.zeros(f))
            self.registry.add(f"{base}/ffn_norm/scale", np.ones(f))
            self.registry.add(f"{base}/ffn_norm/shift", np.zeros(f))
        self.registry.add("scorer/w1", xavier_uniform(rng, (f, f)))
        self.registry.add("scorer/b1", np.zeros(f))
        self.registry.add("scorer/w2", xavier_uniform(rng, (f, f)))
        self.registry.add("scorer/b2", np.zeros(f))
        self.registry.add("scorer/w3", xavier_uniform(rng, (f, 1)))
        self.registry.add("scorer/b3", np.zeros(1))

    # -- forward --------------------------------------------------------

    def _transformer(self, x, train, rng):
        p = self.registry
        cfg = self.config
        for layer in range(cfg.layers):
            base = f"transformer/layer{layer}"
            x = ad.multi_head_self_attention(
                x,
                cfg.heads,
                p[f"{base}/attention/wq"],
                p[f"{base}/attention/bq"],
                p[f"{base}/attention/wk"],
                p[f"{base}/attention/bk"],
                p[f"{base}/attention/wv"],
                p[f"{base}/attention/bv"],
                p[f"{base}/attention/wo"],
                p[f"{base}/attention/bo"],
                p[f"{base}/attention_norm/scale"],
                p[f"{base}/attention_norm/shift"],
                dropout_p=cfg.dropout,
                rng=rng,
                train=train,
            )
            hidden = ad.relu(ad.matmul(x, p[f"{base}/ffn/w1"]) + p[f"{base}/ffn/b1"])
            hidden = ad.dropout(hidden, cfg.dropout, rng=rng, train=train)
            hidden = ad.matmul(hidden, p[f"{base}/ffn/w2"]) + p[f"{base}/ffn/b2"]
            x = ad.layer_norm(
                x + hidden,
                p[f"{base}/ffn_norm/scale"],
                p[f"{base}/ffn_norm/shift"],
            )
        return x

    def _scorer(self, x, train, rng):
        p = self.registry
        cfg = self.config
        h = ad.relu(ad.matmul(x, p["scorer/w1"]) + p["scorer/b1"])
        h = ad.dropout(h, cfg.dropout, rng=rng, train=train)
        h = ad.relu(ad.matmul(h, p["scorer/w2"]) + p["scorer/b2"])
        h = ad.dropout(h, cfg.dropout, rng=rng, train=train)
        return ad.matmul(h, p["scorer/w3"]) + p["scorer/b3"]

    def forward(self, doc, train=False, rng=None):
        """Logits for every candidate span, ordered by (length, start).

        Returns (logits Tensor of shape (M,), list of Spans). Documents
        shorter than K simply have no length-k candidates for k > n.
        """
        cfg = self.config
        n = len(doc)
        x = embed_document(
            doc,
            cfg.embedding,
            self.source,
            no_position=cfg.no_position,
            no_visual=cfg.no_visual,
        )
        pieces = []
        for k in range(1, min(cfg.max_span_length, n) + 1):
            grams = ad.conv1d(x, self.registry[f"cnn/k{k}/weight"],
                              self.registry[f"cnn/k{k}/bias"])
            grams = ad.relu(grams)
            grams = ad.dropout(grams, cfg.dropout, rng=rng, train=train)
            if not cfg.no_transformer:
                grams = self._transformer(grams, train, rng)
            scores = self._scorer(grams, train, rng)
            pieces.append(ad.reshape(scores, (n - k + 1,)))
        logits = ad.concat(pieces, axis=0) if len(pieces) > 1 else pieces[0]
        return logits, enumerate_spans(n, cfg.max_span_length)

    def distribution(self, doc, mask=None):
        """Inference-mode span probabilities (no tape, no dropout)."""
        with ad.no_grad():
            logits, spans = self.forward(doc, train=False)
        probs, mask = score_spans(logits.data, mask)
        return SpanDistribution(tuple(spans), probs, mask)

    # -- bookkeeping ----------------------------------------------------

    def parameter_census(self):
        """Counts of parameter groups, for asserting weight sharing."""
        names = self.registry.names()
        cnn_banks = {n.split("/")[1] for n in names if n.startswith("cnn/")}
        transformer_layers = {
            n.split("/")[1] for n in names if n.startswith("transformer/")
        }
        return {
            "cnn_banks": len(cnn_banks),
            "transformer_layers": len(transformer_layers),
            "scorer_sets": 1,
            "embedding_tables": sum(1 for n in names if n.startswith("embedding/")),
            "total_parameters": self.registry.n_values(),
        }

    def expected_logit_count(self, n_tokens):
        return count_spans(n_tokens, self.config.max_span_length)

    # -- persistence ----------------------------------------------------

    def save(self, path, extra_metadata=None):
        config_dict = self.config.to_dict()
        digest = hashlib.sha256(
            json.dumps(config_dict, sort_keys=True).encode("utf-8")
        ).hexdigest()
        meta = {
            "format": "span-scorer",
            "config": config_dict,
            "config_digest": digest,
            "vocab": self.vocab.to_list() if self.vocab is not None else None,
        }
        if extra_metadata:
            meta.update(extra_metadata)
        save_checkpoint(path, self.registry, meta)

    @classmethod
    def load(cls, path, frozen_vectors=None):
        meta, arrays = load_checkpoint(path)
        config = ModelConfig.from_dict(meta["config"])
        vocab = (
            TokenVocabulary.from_list(meta["vocab"])
            if meta.get("vocab") is not None
            else None
        )
        model = cls(config, vocab=vocab, frozen_vectors=frozen_vectors)
        model.registry.load_arrays(arrays)
        return model, meta
