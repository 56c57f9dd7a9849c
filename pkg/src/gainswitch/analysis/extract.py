"""Toeplitz-hash randomness extraction and basic output checks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

from ..errors import ConfigError, InputError
from ..rng import stream_for

__all__ = [
    "samples_to_bits",
    "extracted_length",
    "toeplitz_extract",
    "toeplitz_matrix",
    "BitTest",
    "monobit_test",
    "runs_test",
    "throughput",
]


def samples_to_bits(codes, bits=8):
    """Unpack integer codes MSB first into a flat 0/1 uint8 array."""
    c = np.asarray(codes, dtype=np.int64)
    if c.size and (c.min() < 0 or c.max() >= 2**bits):
        raise InputError("codes outside the bit range")
    shifts = np.arange(bits - 1, -1, -1)
    return ((c[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def extracted_length(n_in_bits, h_min_per_sample, bits_per_sample, security_eps):
    margin = math.ceil(2 * math.log2(1.0 / security_eps))
    return math.floor(n_in_bits * h_min_per_sample / bits_per_sample) - margin


def _seed_bits(seed, n):
    return stream_for(seed, "toeplitz").integers(0, 2, n, dtype=np.uint8)


def toeplitz_matrix(m, n, seed):
    """Dense ``m x n`` matrix ``T[i, j] = t[i - j + n - 1]`` (reference use only)."""
    t = _seed_bits(seed, m + n - 1)
    i = np.arange(m)[:, None]
    j = np.arange(n)[None, :]
    return t[i - j + n - 1]


def _hash(t, x, m):
    n = x.size
    conv = signal.fftconvolve(t.astype(float), x.astype(float))
    return (np.rint(conv[n - 1:n - 1 + m]).astype(np.int64) & 1).astype(np.uint8)


def toeplitz_extract(raw_bits, h_min_per_sample, bits_per_sample=8, security_eps=2.0**-64, seed=0,
                     block_bits=None):
    """Compress ``raw_bits`` with a seeded binary Toeplitz matrix over GF(2).

    Each block of ``block_bits`` input bits (whole input by default) is
    multiplied by the same matrix; output per block is
    ``floor(n * h / bits) - ceil(2 log2(1/eps))`` bits.
    """
    x = np.asarray(raw_bits, dtype=np.uint8).ravel()
    if not 0 < h_min_per_sample <= bits_per_sample:
        raise ConfigError("h_min_per_sample must be in (0, bits_per_sample]", ["h_min in (0, bits]"])
    if not 0 < security_eps < 1:
        raise ConfigError("security_eps must be in (0, 1)", ["security_eps in (0, 1)"])
    if x.size and x.max() > 1:
        raise InputError("raw_bits must be 0/1")
    n = x.size if block_bits is None else int(block_bits)
    m = extracted_length(n, h_min_per_sample, bits_per_sample, security_eps)
    if n <= 0 or m <= 0:
        raise ConfigError("extracted output length is not positive", ["toeplitz output length > 0"])
    t = _seed_bits(seed, m + n - 1)
    out = [_hash(t, x[i:i + n], m) for i in range(0, x.size - n + 1, n)]
    return np.concatenate(out)


@dataclass(frozen=True)
class BitTest:
    statistic: float
    p_value: float
    passed: bool


def monobit_test(bits, alpha=0.001) -> BitTest:
    b = np.asarray(bits, dtype=np.int64)
    n = b.size
    if n < 100:
        raise InputError("monobit test needs at least 100 bits")
    s = float(np.sum(2 * b - 1))
    p = float(special.erfc(abs(s) / math.sqrt(2 * n)))
    return BitTest(s, p, p >= alpha)


def runs_test(bits, alpha=0.001) -> BitTest:
    """Number-of-runs test; fails outright if the ones fraction is far from 1/2."""
    b = np.asarray(bits, dtype=np.int64)
    n = b.size
    if n < 100:
        raise InputError("runs test needs at least 100 bits")
    pi = b.mean()
    if abs(pi - 0.5) >= 2 / math.sqrt(n):
        return BitTest(float("nan"), 0.0, False)
    v = 1 + int(np.count_nonzero(b[1:] != b[:-1]))
    p = float(special.erfc(abs(v - 2 * n * pi * (1 - pi)) / (2 * math.sqrt(2 * n) * pi * (1 - pi))))
    return BitTest(float(v), p, p >= alpha)


def throughput(rep_rate, h_min_per_sample, compression=1.0):
    """Extractable bit rate (bit/s); ``compression`` is the kept output fraction."""
    if rep_rate <= 0 or h_min_per_sample < 0 or not 0 < compression <= 1:
        raise InputError("invalid throughput arguments")
    return rep_rate * h_min_per_sample * compression
