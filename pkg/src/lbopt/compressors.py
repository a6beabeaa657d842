"""Unbiased sparsifying compressors and their on-the-wire message format.

A ``SparseMessage`` holds 1-based coordinate indices, the raw values at those
coordinates and a common scale; decoding multiplies the values by the scale.
Sending a message costs its payload size (number of entries) times the
per-coordinate channel time.
"""

import struct
from dataclasses import dataclass

import numpy as np

_HEAD = struct.Struct("<I")
_TAIL = struct.Struct("<d")
_ENTRY = np.dtype([("index", "<u4"), ("value", "<f8")])


@dataclass(frozen=True, eq=False)
class SparseMessage:
    indices: np.ndarray
    values: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size and idx.min() < 1:
            raise ValueError("indices are 1-based")
        if idx.size > 1:
            srt = np.sort(idx)
            if (srt[1:] == srt[:-1]).any():
                raise ValueError("indices within one message must be distinct")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def payload_size(self):
        return int(self.indices.size)

    @property
    def entries(self):
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def decode(self, d):
        out = np.zeros(d)
        out[self.indices - 1] = self.scale * self.values
        return out

    def support(self):
        """1-based indices whose decoded value is nonzero."""
        return self.indices[(self.values != 0) & (self.scale != 0)]

    def to_bytes(self):
        rec = np.empty(self.payload_size, dtype=_ENTRY)
        rec["index"] = self.indices
        rec["value"] = self.values
        return _HEAD.pack(self.payload_size) + rec.tobytes() + _TAIL.pack(self.scale)

    @classmethod
    def from_bytes(cls, buf):
        (count,) = _HEAD.unpack_from(buf, 0)
        end = _HEAD.size + count * _ENTRY.itemsize
        if len(buf) != end + _TAIL.size:
            raise ValueError("truncated or oversized message buffer")
        rec = np.frombuffer(buf, dtype=_ENTRY, count=count, offset=_HEAD.size)
        (scale,) = _TAIL.unpack_from(buf, end)
        return cls(rec["index"].astype(np.int64), rec["value"].copy(), scale)

    def __eq__(self, other):
        if not isinstance(other, SparseMessage):
            return NotImplemented
        return (
            self.scale == other.scale
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class MessageBatch:
    """``rows`` messages of equal size sent back to back; decoding sums them."""

    indices: np.ndarray
    values: np.ndarray
    scale: float = 1.0

    @property
    def rows(self):
        return int(self.indices.shape[0])

    @property
    def payload_size(self):
        return int(self.indices.size)

    def decode(self, d):
        idx = self.indices.reshape(-1) - 1
        return self.scale * np.bincount(idx, weights=self.values.reshape(-1), minlength=d)

    def messages(self):
        return [SparseMessage(i, v, self.scale) for i, v in zip(self.indices, self.values)]


def rand_k(x, K, rng, scale=None):
    """Keep K distinct uniformly chosen coordinates, scaled by d/K (unbiased)."""
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    if not 1 <= K <= d:
        raise ValueError(f"K must lie in [1, {d}], got {K}")
    if K == d:
        idx = np.arange(d)
    elif K == 1:
        idx = rng.integers(0, d, size=1)
    elif d <= 256:
        idx = np.sort(rng.permutation(d)[:K])
    else:
        idx = np.sort(rng.choice(d, size=K, replace=False))
    return SparseMessage(idx + 1, x[idx], d / K if scale is None else scale)


def perm_blocks(d, n, perm):
    """Split a permutation of range(d) into n blocks; the last takes the remainder."""
    size = d // n
    if size == 0:
        raise ValueError(f"cannot split d={d} coordinates among n={n} workers")
    cuts = [i * size for i in range(n)] + [d]
    return [perm[cuts[i] : cuts[i + 1]] for i in range(n)]


def perm_k(x, part, n, rng=None, perm=None):
    """Block ``part`` (0-based) of a shared random permutation, scaled by n.

    All workers must see the same permutation: either pass it as ``perm`` or
    pass identically seeded generators.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    if not 0 <= part < n:
        raise ValueError(f"part must lie in [0, {n}), got {part}")
    if perm is None:
        perm = rng.permutation(d)
    idx = np.sort(perm_blocks(d, n, perm)[part])
    return SparseMessage(idx + 1, x[idx], float(n))


def identity(x):
    """Full vector, every coordinate on the wire."""
    x = np.asarray(x, dtype=np.float64)
    return SparseMessage(np.arange(1, x.size + 1), x, 1.0)


def stream_view(messages, tau=1.0):
    """Per-coordinate arrival offsets for messages sent back to back on one channel."""
    out = []
    clock = 0.0
    for msg in messages:
        for j in np.asarray(msg.indices).reshape(-1).tolist():
            clock += tau
            out.append((j, clock))
    return out


class RandK:
    """Callable compressor wrapper used by the algorithms."""

    def __init__(self, K, scale=None):
        self.K = int(K)
        self.scale = scale

    def __call__(self, x, rng):
        return rand_k(x, min(self.K, np.size(x)), rng, self.scale)

    def burst(self, x, repeats, rng):
        """``repeats`` independent compressions of ``x`` as one ``MessageBatch``."""
        x = np.asarray(x, dtype=np.float64)
        d = x.size
        K = min(self.K, d)
        scale = d / K if self.scale is None else self.scale
        if K == 1:
            idx = rng.integers(0, d, size=(repeats, 1))
        else:
            idx = np.stack([np.sort(rng.choice(d, size=K, replace=False)) for _ in range(repeats)])
        return MessageBatch(idx + 1, x[idx], scale)

    def omega(self, d):
        return d / self.K - 1.0


class Identity:
    K = None

    def __call__(self, x, rng):
        return identity(x)

    def omega(self, d):
        return 0.0
