"""PCSA and LogLog sketch states with smoothed cell offsets.

Subsketch ``i`` partitions the vertical axis into cells
``(2**(-j-R_i), 2**(-(j-1)-R_i)]``.  Streaming sketches live on the unit
board, so cell indices are clamped to ``[1, clamp_max]`` (LogLog) or
``[1, 64]`` (PCSA).

Wire format (little-endian, no padding)::

    magic "GRSK" | version u8 = 1 | kind u8 | smoothing u8 | reserved u8 = 0
    | m u32 | seed u64 | offset_seed u64 | payload | crc32 u32

kind: 0 = pcsa, 1 = loglog.  smoothing: 0 = none, 1 = random, 2 = uniform.
The payload is ``m`` register bytes (0 = EMPTY) for LogLog, ``m`` u64
bitmaps for PCSA (bit k-1 set iff cell k is occupied).  The CRC covers
every preceding byte.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import hashing
from ._validation import as_keys, check_kind, check_m, check_seed, check_smoothing
from .exceptions import CorruptSketchError, IncompatibleSketchError, InvalidParameterError

EMPTY = 0
PCSA_WIDTH = 64
DEFAULT_CLAMP_MAX = 62

MAGIC = b"GRSK"
VERSION = 1
_HEADER = struct.Struct("<4sBBBBIQQ")
_KIND_CODES = {"pcsa": 0, "loglog": 1}
_MODE_CODES = {"none": 0, "random": 1, "uniform": 2}
_OFFSET_SALT = 0x6F66667365747321


@dataclass(frozen=True, eq=False)
class OffsetVector:
    """Per-subsketch offsets ``R_i`` in [0, 1)."""

    mode: str
    values: np.ndarray
    rng_seed: int = 0

    @classmethod
    def build(cls, mode: str, m: int, rng_seed: int = 0) -> "OffsetVector":
        mode = check_smoothing(mode)
        if mode == "none":
            values = np.zeros(m)
            rng_seed = 0
        elif mode == "uniform":
            values = np.arange(m) / m
            rng_seed = 0
        else:
            values = random_offsets(m, rng_seed)
        values.setflags(write=False)
        return cls(mode, values, rng_seed)

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def scales(self) -> np.ndarray:
        """``2**-R_i``, computed once so every insertion path uses the same floats."""
        return np.exp2(-self.values)

    def __eq__(self, other):
        if not isinstance(other, OffsetVector):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.rng_seed == other.rng_seed
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.mode, self.rng_seed, self.values.tobytes()))


def random_offsets(m: int, rng_seed: int) -> np.ndarray:
    """Offsets from a splitmix64 stream: top 53 bits of ``mix64(seed + (i+1)*GOLDEN)``."""
    i = np.arange(1, m + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = np.uint64(rng_seed & hashing.MASK64) + i * np.uint64(hashing.GOLDEN)
        z = hashing._mix64_np(state)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def offset_seed_for(seed: int) -> int:
    return hashing.mix64(seed ^ _OFFSET_SALT)


class _Sketch:
    kind: str

    def __init__(self, m, offsets: OffsetVector, seed: int):
        self.m = m
        self.offsets = offsets
        self.seed = seed
        self._scales = offsets.scales

    # --- insertion -------------------------------------------------------
    def add(self, key) -> None:
        """Insert one key (bytes, str or int)."""
        self.update([key])

    def update(self, keys) -> None:
        """Insert many keys.  Integer arrays take the fast 8-byte path."""
        keys = as_keys(keys)
        if isinstance(keys, np.ndarray):
            self.update_hashes(hashing.hash64_u64(keys, self.seed))
        else:
            self.update_hashes(hashing.hash64_many(keys, self.seed))

    def update_hashes(self, hashes) -> None:
        """Insert pre-computed 64-bit hashes (must come from this sketch's seed)."""
        hashes = np.asarray(hashes, dtype=np.uint64).reshape(-1)
        if hashes.size == 0:
            return
        buckets, num = hashing.split_many(hashes, self.m)
        cells = hashing.cells_from_numerators(num, self._scales[buckets])
        self._apply(buckets, cells)

    def _apply(self, buckets, cells):
        raise NotImplementedError

    # --- misc --------------------------------------------------------------
    @property
    def is_empty(self) -> bool:
        return not np.any(self._state)

    def copy(self):
        other = object.__new__(type(self))
        other.__dict__.update(self.__dict__)
        other._state = self._state.copy()
        return other

    def _compat_fields(self):
        return [("kind", self.kind), ("m", self.m), ("seed", self.seed), ("offsets", self.offsets)]

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self._compat_fields() == other._compat_fields() and np.array_equal(
            self._state, other._state
        )

    def __repr__(self):
        return (
            f"{type(self).__name__}(m={self.m}, smoothing={self.offsets.mode!r}, "
            f"seed={self.seed:#x})"
        )


class LogLogSketch(_Sketch):
    """``m`` registers holding the highest occupied cell of each subsketch."""

    kind = "loglog"

    def __init__(self, m, offsets, seed, clamp_max=DEFAULT_CLAMP_MAX, registers=None):
        super().__init__(m, offsets, seed)
        if not 1 <= clamp_max <= DEFAULT_CLAMP_MAX:
            raise InvalidParameterError(f"clamp_max must be in [1, {DEFAULT_CLAMP_MAX}]")
        self.clamp_max = clamp_max
        if registers is None:
            registers = np.zeros(m, dtype=np.uint8)
        self._state = np.asarray(registers, dtype=np.uint8).copy()

    @property
    def registers(self) -> np.ndarray:
        """Register values; 0 is EMPTY.  Read-only view."""
        view = self._state.view()
        view.setflags(write=False)
        return view

    def _apply(self, buckets, cells):
        vals = np.clip(cells, 1, self.clamp_max).astype(np.uint8)
        np.maximum.at(self._state, buckets, vals)

    def _compat_fields(self):
        return super()._compat_fields() + [("clamp_max", self.clamp_max)]


class PCSASketch(_Sketch):
    """``m`` 64-bit occupancy bitmaps."""

    kind = "pcsa"

    def __init__(self, m, offsets, seed, bitmaps=None):
        super().__init__(m, offsets, seed)
        if bitmaps is None:
            bitmaps = np.zeros(m, dtype=np.uint64)
        self._state = np.asarray(bitmaps, dtype=np.uint64).copy()

    @property
    def bitmaps(self) -> np.ndarray:
        view = self._state.view()
        view.setflags(write=False)
        return view

    def occupancy(self) -> np.ndarray:
        """Boolean (m, 64) matrix; column k-1 is cell k."""
        shifts = np.arange(PCSA_WIDTH, dtype=np.uint64)
        return ((self._state[:, None] >> shifts) & np.uint64(1)).astype(bool)

    def _apply(self, buckets, cells):
        bits = np.left_shift(np.uint64(1), (np.clip(cells, 1, PCSA_WIDTH) - 1).astype(np.uint64))
        np.bitwise_or.at(self._state, buckets, bits)


def new_sketch(kind="loglog", m=4096, smoothing=None, seed=0, *, clamp_max=DEFAULT_CLAMP_MAX):
    """Create an empty sketch.

    ``smoothing`` defaults to ``"random"`` for LogLog and ``"uniform"`` for
    PCSA.  Random offsets come from a stream seeded by a salted mix of
    ``seed``, independent of the item hashes.
    """
    kind = check_kind(kind)
    m = check_m(m)
    seed = check_seed(seed)
    if smoothing is None:
        smoothing = "random" if kind == "loglog" else "uniform"
    smoothing = check_smoothing(smoothing)
    offsets = OffsetVector.build(smoothing, m, offset_seed_for(seed) if smoothing == "random" else 0)
    if kind == "loglog":
        return LogLogSketch(m, offsets, seed, clamp_max=clamp_max)
    return PCSASketch(m, offsets, seed)


def check_compatible(a, b) -> None:
    if type(a) is not type(b):
        raise IncompatibleSketchError("kind", getattr(a, "kind", None), getattr(b, "kind", None))
    for (name, left), (_, right) in zip(a._compat_fields(), b._compat_fields()):
        if name == "offsets" and left != right:
            raise IncompatibleSketchError("offsets", left.mode, right.mode)
        if left != right:
            raise IncompatibleSketchError(name, left, right)


def merge(a, b):
    """Union of two compatible sketches (register max / bitwise OR)."""
    check_compatible(a, b)
    out = a.copy()
    if a.kind == "loglog":
        np.maximum(out._state, b._state, out=out._state)
    else:
        np.bitwise_or(out._state, b._state, out=out._state)
    return out


def serialize(sketch) -> bytes:
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        _KIND_CODES[sketch.kind],
        _MODE_CODES[sketch.offsets.mode],
        0,
        sketch.m,
        sketch.seed,
        sketch.offsets.rng_seed,
    )
    dtype = "<u1" if sketch.kind == "loglog" else "<u8"
    body = header + sketch._state.astype(dtype).tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize(data: bytes):
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise CorruptSketchError("truncated header", len(data))
    magic, version, kind_code, mode_code, reserved, m, seed, offset_seed = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptSketchError("bad magic", 0)
    if version != VERSION:
        raise CorruptSketchError(f"unsupported version {version}", 4)
    kinds = {v: k for k, v in _KIND_CODES.items()}
    modes = {v: k for k, v in _MODE_CODES.items()}
    if kind_code not in kinds:
        raise CorruptSketchError(f"unknown kind {kind_code}", 5)
    if mode_code not in modes:
        raise CorruptSketchError(f"unknown smoothing mode {mode_code}", 6)
    if reserved != 0:
        raise CorruptSketchError("reserved byte is not zero", 7)
    if not 1 <= m <= hashing.MAX_M:
        raise CorruptSketchError(f"m={m} out of range", 8)
    kind, mode = kinds[kind_code], modes[mode_code]
    if mode != "random" and offset_seed != 0:
        raise CorruptSketchError("offset_seed set without random smoothing", 20)

    width = 1 if kind == "loglog" else 8
    payload_end = _HEADER.size + m * width
    if len(data) != payload_end + 4:
        raise CorruptSketchError(
            f"expected {payload_end + 4} bytes, got {len(data)}", min(len(data), payload_end)
        )
    (crc,) = struct.unpack_from("<I", data, payload_end)
    if crc != zlib.crc32(data[:payload_end]):
        raise CorruptSketchError("CRC mismatch", payload_end)

    offsets = OffsetVector.build(mode, m, offset_seed)
    if kind == "loglog":
        regs = np.frombuffer(data, dtype="<u1", count=m, offset=_HEADER.size)
        bad = np.flatnonzero(regs > DEFAULT_CLAMP_MAX)
        if bad.size:
            raise CorruptSketchError(
                f"register value {regs[bad[0]]} exceeds {DEFAULT_CLAMP_MAX}", _HEADER.size + int(bad[0])
            )
        return LogLogSketch(m, offsets, seed, registers=regs)
    bitmaps = np.frombuffer(data, dtype="<u8", count=m, offset=_HEADER.size)
    return PCSASketch(m, offsets, seed, bitmaps=bitmaps)
