"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps a float64 ndarray and records the operations applied to it
on a tape. Calling ``backward()`` on a scalar result walks the tape in reverse
topological order and accumulates gradients into every tensor that requires
them. The op set is deliberately small: just what the span classifier needs
(dense algebra, windowed convolution via im2col, softmax, attention, layer
norm, dropout, embedding lookup, and a fused softmax cross-entropy).

float64 is the default dtype so finite-difference checks stay meaningful.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "concat",
    "reshape",
    "transpose",
    "relu",
    "matmul",
    "sliding_windows",
    "conv1d",
    "embedding_lookup",
    "dropout",
    "softmax",
    "layer_norm",
    "multi_head_self_attention",
    "softmax_cross_entropy",
]

_grad_enabled = True


class no_grad:
    """Context manager that disables tape recording inside its block."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _check_finite(name, arr):
    if not np.isfinite(arr).all():
        raise ValueError(f"non-finite values entering {name}")


class Tensor:
    """A node in the computation graph backed by a numpy array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False):
        if isinstance(data, Tensor):
            raise TypeError("cannot wrap a Tensor in a Tensor")
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def backward(self):
        """Backpropagate from a scalar tensor through the recorded tape."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order = []
        seen = set()
        stack = [(self, iter(self._parents))]
        seen.add(id(self))
        while stack:
            node, parents = stack[-1]
            advanced = False
            for p in parents:
                if id(p) not in seen and p.requires_grad:
                    seen.add(id(p))
                    stack.append((p, iter(p._parents)))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    """Build an op result; skips tape recording when no parent needs grads."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _unbroadcast(g, shape):
    """Sum a gradient over the axes numpy broadcasting introduced."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward_fn)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward_fn)


def power(a, exponent):
    """Elementwise a**exponent for a constant (non-tensor) exponent."""
    a = _as_tensor(a)
    e = float(exponent)
    data = a.data**e

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g * e * a.data ** (e - 1.0))

    return _make(data, (a,), backward_fn)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects operands with at least 2 dimensions")
    data = a.data @ b.data

    def backward_fn(g):
        if a.requires_grad:
            ga = g @ b.data.swapaxes(-1, -2)
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = a.data.swapaxes(-1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), backward_fn)


def relu(a):
    a = _as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0.0))

    return _make(data, (a,), backward_fn)


def reduce_sum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _make(data, (a,), backward_fn)


def reshape(a, shape):
    a = _as_tensor(a)
    data = a.data.reshape(shape)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return _make(data, (a,), backward_fn)


def transpose(a, axes):
    a = _as_tensor(a)
    data = a.data.transpose(axes)
    inverse = np.argsort(axes)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g.transpose(inverse))

    return _make(data, (a,), backward_fn)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty sequence")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        pieces = np.split(g, offsets, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accumulate(piece)

    return _make(data, tuple(tensors), backward_fn)


def sliding_windows(a, k):
    """Stack the k-token windows of an (n, d) sequence into (n-k+1, k*d) rows.

    Row j is the concatenation of rows j..j+k-1 of the input, which is the
    im2col layout a width-k convolution consumes.
    """
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ValueError("sliding_windows expects an (n, d) sequence")
    n, d = a.data.shape
    k = int(k)
    if k < 1:
        raise ValueError("window width must be at least 1")
    if k > n:
        raise ValueError(f"window width {k} exceeds sequence length {n}")
    view = np.lib.stride_tricks.sliding_window_view(a.data, (k, d))
    data = view.reshape(n - k + 1, k * d).copy()

    def backward_fn(g):
        if not a.requires_grad:
            return
        gr = g.reshape(n - k + 1, k, d)
        ga = np.zeros_like(a.data)
        for offset in range(k):
            ga[offset : offset + n - k + 1] += gr[:, offset, :]
        a._accumulate(ga)

    return _make(data, (a,), backward_fn)


def conv1d(x, weight, bias):
    """Width-k convolution over an (n, d) sequence.

    ``weight`` has shape (k*d, f); k is inferred from the input width. Output
    row j scores the window starting at token j, shape (n-k+1, f).
    """
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.ndim != 2:
        raise ValueError("conv1d expects an (n, d) sequence")
    n, d = x.data.shape
    kd, f = weight.data.shape
    if kd % d != 0:
        raise ValueError(f"weight rows {kd} not a multiple of input width {d}")
    k = kd // d
    if bias.data.shape != (f,):
        raise ValueError("bias shape does not match filter count")
    _check_finite("conv1d", x.data)
    windows = sliding_windows(x, k)
    return matmul(windows, weight) + bias


def embedding_lookup(table, ids):
    """Gather rows of a (v, e) table by integer id; backward scatter-adds."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError("embedding_lookup expects a 1-d id array")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError("embedding id out of range")
    data = table.data[ids]

    def backward_fn(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids, g)
            table._accumulate(gt)

    return _make(data, (table,), backward_fn)


def dropout(a, p, rng=None, train=False):
    """Inverted dropout: training scales kept units by 1/(1-p)."""
    a = _as_tensor(a)
    p = float(p)
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    if not train or p == 0.0:
        return a
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)
    data = a.data * mask

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _make(data, (a,), backward_fn)


def softmax(a, axis=-1):
    """Numerically stable softmax along one axis (fused backward)."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        if a.requires_grad:
            inner = (g * data).sum(axis=axis, keepdims=True)
            a._accumulate((g - inner) * data)

    return _make(data, (a,), backward_fn)


def layer_norm(x, scale, shift, eps=1e-5):
    """Normalize the last axis to zero mean and unit variance, then affine."""
    x, scale, shift = _as_tensor(x), _as_tensor(scale), _as_tensor(shift)
    d = x.data.shape[-1]
    mean = reduce_sum(x, axis=-1, keepdims=True) * (1.0 / d)
    centered = x - mean
    var = reduce_sum(centered * centered, axis=-1, keepdims=True) * (1.0 / d)
    inv = power(var + eps, -0.5)
    return centered * inv * scale + shift


def multi_head_self_attention(
    x,
    heads,
    wq,
    bq,
    wk,
    bk,
    wv,
    bv,
    wo,
    bo,
    scale,
    shift,
    dropout_p=0.0,
    rng=None,
    train=False,
):
    """Self-attention sublayer: layer_norm(x + dropout(proj(attend(x)))).

    Each output row mixes value projections with softmax weights, so with the
    value and output projections zeroed the sublayer reduces to layer_norm(x).
    """
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ValueError("attention expects an (n, d) sequence")
    n, d = x.data.shape
    heads = int(heads)
    if heads < 1 or d % heads != 0:
        raise ValueError(f"model width {d} not divisible by {heads} heads")
    _check_finite("attention", x.data)
    dh = d // heads

    def split(t):
        return transpose(reshape(t, (n, heads, dh)), (1, 0, 2))

    q = split(matmul(x, wq) + bq)
    k = split(matmul(x, wk) + bk)
    v = split(matmul(x, wv) + bv)
    logits = matmul(q, transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(dh))
    weights = softmax(logits, axis=-1)
    context = reshape(transpose(matmul(weights, v), (1, 0, 2)), (n, d))
    projected = matmul(context, wo) + bo
    projected = dropout(projected, dropout_p, rng=rng, train=train)
    return layer_norm(x + projected, scale, shift)


def softmax_cross_entropy(logits, target):
    """Cross-entropy between softmax(logits) and a fixed target distribution.

    ``target`` is a plain array: entries must be non-negative and sum to 1
    within 1e-9. The gradient is softmax(logits) - target, computed in a
    single fused step via log-sum-exp so large logits cannot overflow.
    """
    logits = _as_tensor(logits)
    target = np.asarray(target, dtype=np.float64)
    if logits.data.shape != target.shape:
        raise ValueError(
            f"logits shape {logits.data.shape} != target shape {target.shape}"
        )
    if logits.ndim != 1:
        raise ValueError("softmax_cross_entropy expects 1-d logits")
    _check_finite("softmax_cross_entropy", logits.data)
    if (target < 0.0).any():
        raise ValueError("target distribution has negative entries")
    total = target.sum()
    if total == 0.0:
        raise ValueError("target distribution has zero mass")
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"target distribution sums to {total!r}, not 1")
    m = logits.data.max()
    log_z = m + math.log(np.exp(logits.data - m).sum())
    data = np.asarray(log_z - float(target @ logits.data))

    def backward_fn(g):
        if logits.requires_grad:
            probs = np.exp(logits.data - log_z)
            logits._accumulate(g * (probs - target))

    return _make(data, (logits,), backward_fn)
