"""Named parameter tensors and the binary checkpoint format.

Checkpoint layout (little endian)::

    b"HYPF" | version u32 | count u32
    per tensor: name_len u16 | utf-8 name | rank u8 | dims u64*rank
                | dtype u8 (1 = float32, 2 = float64) | raw values
"""

from __future__ import annotations

import struct
from collections.abc import Iterator, Mapping
from pathlib import Path

import numpy as np

from .tensor import Tensor, leaf

MAGIC = b"HYPF"
FORMAT_VERSION = 1
_DTYPE_TAGS = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_TAG_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class CheckpointError(IOError):
    pass


class ParamStore(Mapping):
    """Ordered mapping name -> trainable Tensor, all of one dtype."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._tensors: dict[str, Tensor] = {}
        self.frozen: set[str] = set()

    def add(self, name, value):
        if name in self._tensors:
            raise KeyError(f"parameter {name!r} already exists")
        t = leaf(np.array(value, dtype=self.dtype), name=name)
        self._tensors[name] = t
        return t

    def __getitem__(self, name) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def trainable(self):
        return [(n, t) for n, t in self._tensors.items() if n not in self.frozen]

    def zero_grads(self):
        for t in self._tensors.values():
            t.grad[...] = 0

    def num_values(self):
        return sum(t.value.size for t in self._tensors.values())

    def values(self):
        return {n: t.value for n, t in self._tensors.items()}

    def grads(self):
        return {n: t.grad for n, t in self._tensors.items()}

    def copy(self):
        out = ParamStore(self.dtype)
        for n, t in self._tensors.items():
            out.add(n, t.value.copy())
        out.frozen = set(self.frozen)
        return out

    def astype(self, dtype):
        out = ParamStore(dtype)
        for n, t in self._tensors.items():
            out.add(n, t.value)
        out.frozen = set(self.frozen)
        return out

    def load_values(self, values: Mapping[str, np.ndarray]):
        for n, v in values.items():
            if n not in self._tensors:
                raise KeyError(f"unknown parameter {n!r}")
            dst = self._tensors[n].value
            if dst.shape != v.shape:
                raise CheckpointError(f"shape mismatch for {n!r}: {v.shape} vs {dst.shape}")
            dst[...] = v


def write_tensors(path, tensors: Mapping[str, np.ndarray]):
    """Write named arrays in the HYPF format."""
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<")
        if dt not in _DTYPE_TAGS:
            arr = arr.astype("<f8")
            dt = arr.dtype
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(struct.pack("<B", _DTYPE_TAGS[dt]))
        chunks.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_tensors(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a HYPF checkpoint")
    version, count = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    off = 12
    out = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", data, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}Q", data, off)
            off += 8 * rank
            (tag,) = struct.unpack_from("<B", data, off)
            off += 1
            dt = _TAG_DTYPES[tag]
            n = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
            out[name] = np.frombuffer(data[off:off + n], dtype=dt).reshape(dims).copy()
            off += n
    except (struct.error, KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    return out
