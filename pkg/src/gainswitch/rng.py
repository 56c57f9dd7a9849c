"""Counter-based random streams.

Every stream is a Philox-4x64 generator keyed by ``(seed, stream_id)``: the
128-bit key is ``seed | stream_id << 64``. Distinct keys give independent,
reproducible sequences without any shared state, so runs can be split
across workers freely. Gaussian variates come from numpy's ziggurat
sampler (``Generator.standard_normal``); numba-compiled kernels consume
the same generator and produce the identical sequence.
"""
from __future__ import annotations

import hashlib

import numpy as np

from .errors import ConfigError

__all__ = ["make_noise_stream", "stream_for", "derive_stream_base", "indexed_normals", "STREAMS"]

_MASK64 = (1 << 64) - 1

# component offsets within one run's stream block
STREAMS = {
    "field": 0,
    "frequency": 1,
    "electronic": 2,
    "dither": 3,
    "bootstrap": 4,
    "toeplitz": 5,
    "reference": 6,
}


def _as_u64(value, name):
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer", [f"{name} must be an integer"]) from None
    if v < 0 or v > _MASK64:
        raise ConfigError(f"{name} must fit in 64 unsigned bits", [f"{name} out of range"])
    return v


def make_noise_stream(seed, stream_id=0) -> np.random.Generator:
    """Independent reproducible generator for ``(seed, stream_id)``."""
    s = _as_u64(seed, "seed")
    k = _as_u64(stream_id, "stream_id")
    return np.random.Generator(np.random.Philox(key=s | (k << 64)))


def stream_for(seed, component, base=0) -> np.random.Generator:
    """Generator for a named run component on top of a stream block ``base``."""
    return make_noise_stream(seed, (base + STREAMS[component]) & _MASK64)


def derive_stream_base(*labels) -> int:
    """Stable stream block for a label tuple, e.g. a sweep ``(path, value)``.

    The low 16 bits are left free for component offsets.
    """
    h = hashlib.sha256(repr(tuple(labels)).encode()).digest()
    return (int.from_bytes(h[:6], "little") << 16) & _MASK64


_CHUNK = 1 << 16


def indexed_normals(seed, component, start, stop, base=0) -> np.ndarray:
    """Standard normals addressed by absolute sample index ``[start, stop)``.

    Index ``i`` always receives the same variate no matter how the range is
    split, so block-wise processing reproduces a single-pass run. Chunk
    ``j`` of 65536 indices reads from the component stream advanced by
    ``j * 2**64`` counter blocks.
    """
    start, stop = int(start), int(stop)
    if stop <= start:
        return np.empty(0)
    if start < 0:
        raise ValueError("indexed_normals: start must be >= 0")
    sid = (base + STREAMS[component]) & _MASK64
    out = np.empty(stop - start)
    j0, j1 = start // _CHUNK, (stop - 1) // _CHUNK
    for j in range(j0, j1 + 1):
        bg = np.random.Philox(key=_as_u64(seed, "seed") | (sid << 64))
        bg.advance(j << 64)
        chunk = np.random.Generator(bg).standard_normal(_CHUNK)
        lo = max(start, j * _CHUNK)
        hi = min(stop, (j + 1) * _CHUNK)
        out[lo - start:hi - start] = chunk[lo - j * _CHUNK:hi - j * _CHUNK]
    return out
