"""Deterministic stand-in for a random oracle.

A key is hashed to 64 bits with a splitmix64-style construction and the
64-bit value is split into a subsketch index and a vertical dart coordinate.

Construction (all arithmetic mod 2**64)::

    h = mix64(seed + len(key) * GOLDEN)
    for w in little-endian 8-byte words of key (last word zero padded):
        h = mix64(h ^ w)
    hash64 = mix64(h + GOLDEN)

``mix64`` is the splitmix64 finalizer (shift 30/27/31, multipliers
0xBF58476D1CE4E5B9 and 0x94D049BB133111EB).  Every step is a bijection of
the running state, so two different seeds never collide on the same key.

Splitting: the bucket is ``(h * m) >> 64`` (multiply-shift on the whole
word, bias at most m / 2**64) and the low 44 bits ``f`` give the vertical
position ``v = (2**44 - f) / 2**44`` in (0, 1].  For power-of-two ``m`` up
to 2**20 the two fields use disjoint bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import MAX_M, check_m

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB

FRACTION_BITS = 44
_FRACTION_ONE = 1 << FRACTION_BITS
_FRACTION_MASK = _FRACTION_ONE - 1
# Largest cell index reachable at R = 0 (v = 2**-44).
MAX_HASHED_CELL = FRACTION_BITS + 1


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


def hash64(key: bytes, seed: int = 0) -> int:
    """Hash a byte string to a 64-bit integer."""
    n = len(key)
    h = mix64(seed + n * GOLDEN)
    for off in range(0, n, 8):
        h = mix64(h ^ int.from_bytes(key[off:off + 8], "little"))
    return mix64(h + GOLDEN)


def _hash_words(words: np.ndarray, nbytes: int, seed: int) -> np.ndarray:
    """Vectorized hash64 for keys that all have ``nbytes`` bytes.

    ``words`` has shape (n, ceil(nbytes / 8)), little-endian, zero padded.
    """
    start = np.uint64((seed + nbytes * GOLDEN) & MASK64)
    h = np.full(words.shape[0], start, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix64_np(h)
        for col in range(words.shape[1]):
            h = _mix64_np(h ^ words[:, col])
        return _mix64_np(h + np.uint64(GOLDEN))


def hash64_u64(keys, seed: int = 0) -> np.ndarray:
    """Hash integer keys, each encoded as 8 little-endian bytes.

    ``hash64_u64([k], s)[0] == hash64(k.to_bytes(8, "little"), s)``.
    """
    arr = np.asarray(keys)
    if arr.dtype.kind == "i":
        arr = arr.astype(np.int64).view(np.uint64)
    arr = np.ascontiguousarray(arr, dtype=np.uint64).reshape(-1)
    return _hash_words(arr[:, None], 8, seed)


def hash64_many(keys, seed: int = 0) -> np.ndarray:
    """Hash a sequence of byte strings; keys are grouped by length."""
    keys = list(keys)
    out = np.empty(len(keys), dtype=np.uint64)
    groups: dict[int, list[int]] = {}
    for i, k in enumerate(keys):
        groups.setdefault(len(k), []).append(i)
    for nbytes, idx in groups.items():
        nwords = (nbytes + 7) // 8
        if nwords == 0:
            out[idx] = hash64(b"", seed)
            continue
        width = nwords * 8
        buf = b"".join(keys[i].ljust(width, b"\0") for i in idx)
        words = np.frombuffer(buf, dtype="<u8").reshape(len(idx), nwords)
        out[idx] = _hash_words(words, nbytes, seed)
    return out


@dataclass(frozen=True)
class HashedItem:
    """A hashed key: subsketch index plus vertical coordinate ``u = -log2(v)``."""

    bucket: int
    u: float
    raw: int

    @property
    def numerator(self) -> int:
        """``2**44 * v`` as an exact integer in [1, 2**44]."""
        return _FRACTION_ONE - (self.raw & _FRACTION_MASK)

    @property
    def v(self) -> float:
        return self.numerator / _FRACTION_ONE


def split(h: int, m: int) -> HashedItem:
    m = check_m(m)
    h &= MASK64
    bucket = (h * int(m)) >> 64
    num = _FRACTION_ONE - (h & _FRACTION_MASK)
    u = FRACTION_BITS - math.log2(num)
    return HashedItem(bucket=bucket, u=u, raw=h)


def split_many(hashes: np.ndarray, m: int):
    """Vectorized :func:`split`; returns ``(buckets, numerators)``.

    Numerators are ``2**44 * v`` as int64 (exact).
    """
    m = check_m(m)
    h = np.asarray(hashes, dtype=np.uint64)
    # (h * m) >> 64 without 128-bit integers: m <= 2**20 so split h in halves.
    hi = h >> np.uint64(32)
    lo = h & np.uint64(0xFFFFFFFF)
    mm = np.uint64(m)
    with np.errstate(over="ignore"):
        buckets = (hi * mm + ((lo * mm) >> np.uint64(32))) >> np.uint64(32)
    num = np.int64(_FRACTION_ONE) - (h & np.uint64(_FRACTION_MASK)).astype(np.int64)
    return buckets.astype(np.int64), num


def cell_index(u: float, r: float) -> int:
    """Cell ``j`` with ``2**(-j-r) < v <= 2**(-(j-1)-r)``; may be <= 0."""
    return math.floor(u - r) + 1


def cells_from_numerators(num, scale) -> np.ndarray:
    """Exact cell indices from fixed-point numerators.

    ``scale`` is ``2**-R`` per item (or a scalar).  Equivalent to
    ``cell_index(44 - log2(num), R)`` but decided with integer bit lengths
    and one power-of-two scaled comparison, so scalar and vectorized callers
    agree bit for bit.
    """
    num = np.asarray(num, dtype=np.int64)
    # ceil(log2(num)) == bit_length(num - 1), exact through frexp for num < 2**53.
    _, b = np.frexp((num - 1).astype(np.float64))
    t = np.where(num <= np.ldexp(scale, b), b, b + 1)
    return (FRACTION_BITS + 1 - t).astype(np.int64)
