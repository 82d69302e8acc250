"""Vectorized MurmurHash3 (x64, 128-bit variant) over fixed 24-byte keys.

Treatment labels are recomputed on the fly from ``(seed, member, iteration)``
instead of being stored, so every edge a member touches sees the same label
within one permutation iteration. The key is the little-endian concatenation
of the three values as 64-bit words, hashed with murmur seed 0; the first
64-bit half of the digest is used.
"""

from __future__ import annotations

import numpy as np

HASH_NAME = "murmur3_x64_128[h1] over <seed:u64, member:u64, iteration:u64>"

_C1 = np.uint64(0x87C37B91114253D5)
_C2 = np.uint64(0x4CF5AD432745937F)
_F1 = np.uint64(0xFF51AFD7ED558CCD)
_F2 = np.uint64(0xC4CEB9FE1A85EC53)
_KEY_LEN = np.uint64(24)
_FIVE = np.uint64(5)
_TWO64 = 2**64


def _rotl(x, r):
    return (x << np.uint64(r)) | (x >> np.uint64(64 - r))


def _fmix(k):
    k = k ^ (k >> np.uint64(33))
    k = k * _F1
    k = k ^ (k >> np.uint64(33))
    k = k * _F2
    return k ^ (k >> np.uint64(33))


def _as_u64(x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return np.array(int(x) & (_TWO64 - 1), dtype=np.uint64)
    a = np.asarray(x)
    if a.dtype == np.uint64:
        return a
    # two's complement: same bytes as packing a signed 64-bit integer
    return a.astype(np.int64).view(np.uint64)


def murmur3_words(seed, member, iteration) -> np.ndarray:
    """Hash broadcastable arrays of 64-bit words; returns uint64 array."""
    w0 = np.atleast_1d(_as_u64(seed))
    w1 = np.atleast_1d(_as_u64(member))
    w2 = np.atleast_1d(_as_u64(iteration))
    w0, w1, w2 = np.broadcast_arrays(w0, w1, w2)

    h1 = np.zeros(w0.shape, dtype=np.uint64)
    h2 = np.zeros(w0.shape, dtype=np.uint64)

    k1 = _rotl(w0 * _C1, 31) * _C2
    h1 ^= k1
    h1 = _rotl(h1, 27) + h2
    h1 = h1 * _FIVE + np.uint64(0x52DCE729)

    k2 = _rotl(w1 * _C2, 33) * _C1
    h2 ^= k2
    h2 = _rotl(h2, 31) + h1
    h2 = h2 * _FIVE + np.uint64(0x38495AB5)

    # 8-byte tail
    k1 = _rotl(w2 * _C1, 31) * _C2
    h1 ^= k1

    h1 ^= _KEY_LEN
    h2 ^= _KEY_LEN
    h1 = h1 + h2
    h2 = h2 + h1
    h1 = _fmix(h1)
    h2 = _fmix(h2)
    h1 = h1 + h2
    return h1


def _threshold(p: float) -> np.uint64:
    return np.uint64(int(float(p) * _TWO64))


def assign_many(members, iteration, seed: int, p: float) -> np.ndarray:
    """Boolean treatment labels for an array of members.

    ``iteration`` may be a scalar or an array broadcastable against
    ``members`` (e.g. ``iterations[:, None]`` for a batch of relabelings).
    A member is treated iff ``hash / 2**64 < p``, so labels are monotone in
    ``p`` for a fixed hash.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    h = murmur3_words(seed, members, iteration)
    if p >= 1.0:
        return np.ones(h.shape, dtype=bool)
    if p <= 0.0:
        return np.zeros(h.shape, dtype=bool)
    return h < _threshold(p)


def assign(member: int, iteration: int, seed: int, p: float) -> bool:
    return bool(assign_many(np.array([member], dtype=np.int64), iteration, seed, p)[0])
