"""Argument checks shared by the public entry points."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import InvalidParameterError

KINDS = ("pcsa", "loglog")
SMOOTHING_MODES = ("none", "random", "uniform")
MAX_M = 1 << 20
MAX_TAU = 16.0
_MASK64 = (1 << 64) - 1


def check_kind(kind):
    if kind not in KINDS:
        raise InvalidParameterError(f"sketch kind must be one of {KINDS}, got {kind!r}")
    return kind


def check_smoothing(mode):
    if mode not in SMOOTHING_MODES:
        raise InvalidParameterError(f"smoothing must be one of {SMOOTHING_MODES}, got {mode!r}")
    return mode


def check_m(m):
    if isinstance(m, bool) or not isinstance(m, numbers.Integral) or not 1 <= m <= MAX_M:
        raise InvalidParameterError(f"m must be an integer in [1, {MAX_M}], got {m!r}")
    return int(m)


def check_seed(seed):
    """Accept an int or a decimal / 0x-hex string; return it reduced mod 2**64."""
    if isinstance(seed, str):
        try:
            seed = int(seed, 0)
        except ValueError:
            raise InvalidParameterError(f"seed must be decimal or 0x-hex, got {seed!r}") from None
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise InvalidParameterError(f"seed must be an integer, got {seed!r}")
    if not -(1 << 63) <= seed <= _MASK64:
        raise InvalidParameterError(f"seed must fit in 64 bits, got {seed!r}")
    return int(seed) & _MASK64


def check_tau(tau, *, allow_zero=False):
    try:
        tau = float(tau)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"tau must be a real number, got {tau!r}") from None
    lo_ok = tau >= 0 if allow_zero else tau > 0
    if not (lo_ok and tau <= MAX_TAU):
        bound = "[0" if allow_zero else "(0"
        raise InvalidParameterError(f"tau must lie in {bound}, {MAX_TAU:g}], got {tau!r}")
    return tau


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise InvalidParameterError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def _key_bytes(key):
    if isinstance(key, bytes):
        return key
    if isinstance(key, (bytearray, memoryview)):
        return bytes(key)
    if isinstance(key, str):
        return key.encode("utf-8")
    if isinstance(key, numbers.Integral) and not isinstance(key, bool):
        return (int(key) & _MASK64).to_bytes(8, "little")
    raise InvalidParameterError(f"keys must be bytes, str or int, got {type(key).__name__}")


def as_keys(keys):
    """Normalize keys to either a uint64 array (integer input) or a list of bytes.

    Integers hash as their 8-byte little-endian two's-complement encoding, so
    both forms agree on the same key.
    """
    if isinstance(keys, (bytes, str)):
        raise InvalidParameterError("pass an iterable of keys, not a single key")
    if isinstance(keys, np.ndarray) and keys.dtype.kind in "iu":
        return keys.reshape(-1)
    return [_key_bytes(k) for k in keys]
