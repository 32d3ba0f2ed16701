"""Named parameter registry and binary checkpoint serialization.

Parameters live in an insertion-ordered name -> Tensor map so optimizers and
checkpoints agree on iteration order. Checkpoints are a single binary file:
a magic/version header, a JSON metadata block (model config, digest, vocab),
then one record per parameter with its name, shape, and little-endian float64
payload. Round-trips are exact.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .autodiff import Tensor

MAGIC = b"KPEX"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def xavier_uniform(rng, shape):
    """Glorot-uniform init: U(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = (shape[0], shape[-1]) if len(shape) > 1 else (shape[0], shape[0])
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ParameterRegistry:
    """Ordered collection of trainable tensors addressed by unique names."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name, array):
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def clear_grads(self):
        for t in self._params.values():
            t.grad = None

    def n_values(self):
        return sum(t.data.size for t in self._params.values())

    def state_arrays(self):
        """Copies of every parameter array, keyed by name."""
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_arrays(self, arrays, strict=True):
        """Overwrite parameter values in place; shapes must match exactly."""
        mismatched = [
            f"{name}: have {self._params[name].data.shape}, got {np.shape(arr)}"
            for name, arr in arrays.items()
            if name in self._params and self._params[name].data.shape != np.shape(arr)
        ]
        if mismatched:
            raise CheckpointError("shape mismatch for " + "; ".join(mismatched))
        missing = [n for n in self._params if n not in arrays]
        unknown = [n for n in arrays if n not in self._params]
        if strict and (missing or unknown):
            raise CheckpointError(
                f"parameter set mismatch: missing {missing}, unknown {unknown}"
            )
        for name, arr in arrays.items():
            if name in self._params:
                self._params[name].data = np.asarray(arr, dtype=np.float64).copy()


def _write_atomic(path, payload):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, registry, metadata):
    """Serialize registry + metadata to ``path`` (written atomically)."""
    meta_bytes = json.dumps(metadata, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    parts.append(struct.pack("<Q", len(meta_bytes)))
    parts.append(meta_bytes)
    items = list(registry.items())
    parts.append(struct.pack("<Q", len(items)))
    for name, tensor in items:
        name_bytes = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor.data, dtype="<f8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    _write_atomic(path, b"".join(parts))


def load_checkpoint(path):
    """Read a checkpoint; returns (metadata dict, name -> float64 array)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    offset = 0

    def take(n):
        nonlocal offset
        if offset + n > len(blob):
            raise CheckpointError(f"truncated checkpoint {path}")
        piece = blob[offset : offset + n]
        offset += n
        return piece

    if take(4) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack("<Q", take(8))
    metadata = json.loads(take(meta_len).decode("utf-8"))
    (n_records,) = struct.unpack("<Q", take(8))
    arrays = {}
    for _ in range(n_records):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim)) if ndim else ()
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(take(8 * count), dtype="<f8").reshape(shape)
        arrays[name] = data.astype(np.float64)
    if offset != len(blob):
        raise CheckpointError(f"trailing bytes in checkpoint {path}")
    return metadata, arrays
