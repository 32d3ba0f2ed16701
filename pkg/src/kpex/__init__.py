"""kpex: keyphrase extraction with span classification over n-grams.

The package bundles a small reverse-mode autodiff engine, the span
classification model built on top of it (hybrid token embeddings, per-length
convolutions, a shared transformer encoder, a joint softmax over candidate
spans), weak supervision from query logs, chunked inference for long
documents, unsupervised baselines, and an evaluation harness.
"""

__version__ = "0.1.0"
