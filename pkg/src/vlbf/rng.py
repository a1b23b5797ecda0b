"""Counter-based random words keyed by ``(seed, index, position)``.

Each trial owns a virtual stream of 64-bit words; word ``j`` of trial ``t``
is a pure function of ``(seed, t, j)``, so batched, serial and parallel
evaluations draw identical values. Mixing is the SplitMix64 finaliser.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_TRIAL_MULT = np.uint64(0xD1342543DE82EF95)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def mix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def stream_keys(seed: int, indices) -> np.ndarray:
    """Per-index stream keys for a master seed."""
    base = mix64(np.uint64(int(seed) & _MASK64))
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(base ^ mix64(idx * _TRIAL_MULT + _GOLDEN))


def words(keys, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count-1`` of each stream; shape ``keys.shape + (count,)``."""
    keys = np.asarray(keys, dtype=np.uint64)
    pos = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(keys[..., None] + pos * _GOLDEN)


def to_uniform(w) -> np.ndarray:
    """Map 64-bit words to doubles in [0, 1) using the top 53 bits."""
    return (np.asarray(w, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * (2.0**-53)


def uniforms(keys, start: int, count: int) -> np.ndarray:
    return to_uniform(words(keys, start, count))


def bits(keys, start: int, nbits: int) -> np.ndarray:
    """``nbits`` pseudo-random bits per stream, drawn from ``ceil(nbits/64)`` words."""
    nwords = -(-nbits // 64)
    w = words(keys, start, nwords)
    raw = np.ascontiguousarray(w.astype("<u8")).view(np.uint8).reshape(w.shape[:-1] + (nwords * 8,))
    return np.unpackbits(raw, axis=-1, bitorder="little")[..., :nbits]


def n_words_for_bits(nbits: int) -> int:
    return -(-nbits // 64)
