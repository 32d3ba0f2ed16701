"""Hybrid word embeddings: contextual + sinusoidal position + visual.

Each token i embeds as the concatenation h_i ++ pos_i ++ v_i, where h_i comes
from a contextual source (a trainable lookup table, or frozen per-document
vectors loaded from a sidecar file), pos_i is the fixed sinusoidal position
code, and v_i is the 18-float visual row. Ablations zero the position or
visual slice in place, keeping every parameter shape unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from collections import Counter

import numpy as np

from .autodiff import Tensor, concat, embedding_lookup
from .documents import VISUAL_DIM
from .fileio import DatasetError, read_jsonl

UNK_TOKEN = "<unk>"
MASK_TOKEN = "<mask>"


def position_encoding(position, dims):
    """Sinusoidal code: dim 2p = sin(i / 10000^(2p/P)), dim 2p+1 = cos(same)."""
    if dims < 2 or dims % 2 != 0:
        raise ValueError("position dims must be a positive even number")
    if position < 0:
        raise ValueError("position must be non-negative")
    p = np.arange(dims // 2)
    angles = position / np.power(10000.0, 2.0 * p / dims)
    vec = np.empty(dims)
    vec[0::2] = np.sin(angles)
    vec[1::2] = np.cos(angles)
    return vec


def position_matrix(n_tokens, dims):
    p = np.arange(dims // 2)
    positions = np.arange(n_tokens)[:, None]
    angles = positions / np.power(10000.0, 2.0 * p / dims)[None, :]
    mat = np.empty((n_tokens, dims))
    mat[:, 0::2] = np.sin(angles)
    mat[:, 1::2] = np.cos(angles)
    return mat


class TokenVocabulary:
    """Frequency-thresholded token -> id map with reserved unk and mask ids."""

    def __init__(self, tokens):
        reserved = (UNK_TOKEN, MASK_TOKEN)
        for r in reserved:
            if r in tokens:
                raise ValueError(f"reserved token {r!r} in vocabulary input")
        self._tokens = reserved + tuple(tokens)
        self._index = {t: i for i, t in enumerate(self._tokens)}
        if len(self._index) != len(self._tokens):
            raise ValueError("duplicate tokens in vocabulary input")

    @classmethod
    def build(cls, documents, min_count=2):
        """Count tokens across documents; keep those seen >= min_count times."""
        counts = Counter()
        for doc in documents:
            counts.update(doc.tokens)
        kept = sorted(t for t, c in counts.items() if c >= min_count)
        return cls(kept)

    @property
    def unk_id(self):
        return 0

    @property
    def mask_id(self):
        return 1

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._index

    def lookup(self, token):
        return self._index.get(token, 0)

    def ids(self, tokens):
        return np.array([self.lookup(t) for t in tokens], dtype=np.int64)

    def to_list(self):
        return list(self._tokens[2:])

    @classmethod
    def from_list(cls, tokens):
        return cls(tuple(tokens))


@dataclass(frozen=True)
class EmbeddingConfig:
    token_dim: int = 64
    position_dim: int = 32
    visual_dim: int = VISUAL_DIM
    source: str = "trainable"  # or "frozen"
    min_count: int = 2

    def __post_init__(self):
        if self.token_dim < 1:
            raise ValueError("token_dim must be positive")
        if self.position_dim < 2 or self.position_dim % 2 != 0:
            raise ValueError("position_dim must be a positive even number")
        if self.visual_dim != VISUAL_DIM:
            raise ValueError(f"visual_dim is fixed at {VISUAL_DIM}")
        if self.source not in ("trainable", "frozen"):
            raise ValueError(f"unknown embedding source {self.source!r}")

    @property
    def width(self):
        return self.token_dim + self.position_dim + self.visual_dim


class TrainableLookup:
    """Contextual-embedding stand-in: a trainable per-type lookup table."""

    def __init__(self, vocab, table):
        self.vocab = vocab
        self.table = table  # (len(vocab), token_dim) parameter Tensor

    def vectors_for(self, doc):
        return embedding_lookup(self.table, self.vocab.ids(doc.tokens))


class FrozenVectors:
    """Per-document frozen contextual vectors from a sidecar JSONL file.

    Each line is {"id": str, "vectors": [[floats]...]} aligned with the
    document's untruncated token sequence; rows beyond the (possibly
    truncated) document length are dropped.
    """

    def __init__(self, by_id, token_dim):
        self._by_id = by_id
        self.token_dim = token_dim

    @classmethod
    def load(cls, path, token_dim):
        by_id = {}
        for lineno, obj in read_jsonl(path):
            if "id" not in obj or "vectors" not in obj:
                raise DatasetError(f"{path}:{lineno}: expected id and vectors")
            arr = np.asarray(obj["vectors"], dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != token_dim:
                raise DatasetError(
                    f"{path}:{lineno}: vectors must be (n, {token_dim}), "
                    f"got {arr.shape}"
                )
            by_id[str(obj["id"])] = arr
        return cls(by_id, token_dim)

    def vectors_for(self, doc):
        base_id = doc.id.split("#", 1)[0]
        if base_id not in self._by_id:
            raise KeyError(f"no frozen vectors for document {base_id!r}")
        arr = self._by_id[base_id]
        lo, hi = doc.token_offset, doc.token_offset + len(doc)
        if arr.shape[0] < hi:
            raise DatasetError(
                f"document {doc.id!r}: {arr.shape[0]} frozen vectors cover "
                f"fewer than {hi} tokens"
            )
        return Tensor(arr[lo:hi])


def embed_document(doc, config, source, no_position=False, no_visual=False):
    """The (n, width) hybrid embedding matrix as a graph Tensor.

    ``no_position`` / ``no_visual`` zero their slice, so ablated models keep
    identical parameter shapes and widths.
    """
    n = len(doc)
    h = source.vectors_for(doc)
    if h.shape != (n, config.token_dim):
        raise ValueError(
            f"contextual vectors have shape {h.shape}, "
            f"expected ({n}, {config.token_dim})"
        )
    if no_position:
        pos = np.zeros((n, config.position_dim))
    else:
        pos = position_matrix(n, config.position_dim)
    vis = np.zeros((n, config.visual_dim)) if no_visual else doc.visual
    return concat([h, Tensor(pos), Tensor(vis)], axis=1)
