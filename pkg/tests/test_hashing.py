import math

import numpy as np
import pytest
from scipy import stats

from grasketch import hashing
from grasketch.exceptions import InvalidParameterError
from grasketch.hashing import cell_index, cells_from_numerators, hash64, hash64_many, hash64_u64, split, split_many

# Frozen from a from-scratch implementation of the documented construction.
GOLDEN = [
    (b"", 0xE220A8397B1DCDAF, 0x279A0EB29629B2F9),
    (b"a", 0xE9FC4EF02D601D17, 0x25E677CFA8403EC5),
    (b"abc", 0xE62335B15F6A1240, 0x14FB7347C76A1291),
    (b"hello world", 0x976D35EC24155A3A, 0x224C1DF03B8301B0),
    (b"12345678", 0xE2808D8CC061CF68, 0x0DE72C505508D242),
    (b"123456789", 0x9DC930B0A4FF7428, 0xD83CF45B71A78F70),
    (b"\x00", 0x568A9B0B1A2C05EC, 0xAFB86A64602DC24D),
    (bytes(range(32)), 0x345EAF59155A276A, 0xAAC439102CAAAC20),
]


@pytest.mark.parametrize("key,h0,h1", GOLDEN)
def test_golden_vectors(key, h0, h1):
    assert hash64(key, 0) == h0
    assert hash64(key, 0xDEADBEEF) == h1


def test_deterministic_and_seed_sensitive():
    assert hash64(b"key", 7) == hash64(b"key", 7)
    assert hash64(b"key", 7) != hash64(b"key", 7 ^ 1)


def test_vectorized_paths_match_scalar():
    keys = [b"", b"x", b"abcdefgh", b"abcdefghi", "ünïcode".encode(), b"\xff" * 17]
    np.testing.assert_array_equal(hash64_many(keys, 3), [hash64(k, 3) for k in keys])
    ints = np.array([0, 1, 2**40, -1], dtype=np.int64)
    expect = [hash64((int(i) & hashing.MASK64).to_bytes(8, "little"), 5) for i in ints]
    np.testing.assert_array_equal(hash64_u64(ints, 5), expect)


def test_avalanche():
    rng = np.random.default_rng(0)
    flips = []
    for _ in range(300):
        key = bytearray(rng.bytes(12))
        base = hash64(bytes(key))
        bit = int(rng.integers(96))
        key[bit // 8] ^= 1 << (bit % 8)
        flips.append(bin(base ^ hash64(bytes(key))).count("1"))
    assert abs(np.mean(flips) - 32) < 1.0
    assert 24 <= np.percentile(flips, 5) and np.percentile(flips, 95) <= 40


def test_split_extremes():
    # fraction bits all zero -> v = 1 -> u = 0
    item = split(0, 4)
    assert item.u == 0.0 and item.v == 1.0
    # v = 1/2
    item = split(1 << 43, 4)
    assert item.u == 1.0
    # largest fraction -> v = 2**-44, u = 44 (finite)
    item = split((1 << 44) - 1, 4)
    assert item.u == 44.0


def test_split_bucket_range_and_errors():
    for m in (1, 3, 1000, 1 << 20):
        assert split(hashing.MASK64, m).bucket == m - 1
        assert split(0, m).bucket == 0
    with pytest.raises(InvalidParameterError):
        split(5, 0)
    with pytest.raises(InvalidParameterError):
        split(5, (1 << 20) + 1)


def test_split_many_matches_split():
    h = hash64_u64(np.arange(2000))
    for m in (1, 7, 4096, 1 << 20):
        b, num = split_many(h, m)
        for i in range(0, 2000, 97):
            it = split(int(h[i]), m)
            assert b[i] == it.bucket and num[i] == it.numerator


def test_u_is_exponential_with_mean_one_over_ln2():
    h = hash64_u64(np.arange(10**6), 11)
    _, num = split_many(h, 1)
    u = hashing.FRACTION_BITS - np.log2(num.astype(np.float64))
    assert abs(u.mean() * math.log(2) - 1) < 0.01


def test_buckets_are_uniform():
    h = hash64_u64(np.arange(200_000), 2)
    b, _ = split_many(h, 37)
    counts = np.bincount(b, minlength=37)
    assert stats.chisquare(counts).pvalue > 1e-4


def test_cell_index_examples():
    assert cell_index(0.0, 0.0) == 1
    assert cell_index(2.3, 0.5) == 2
    assert cell_index(0.2, 0.5) == 0


def test_cell_index_monotone_with_unit_steps():
    r = 0.37
    us = np.linspace(0, 10, 5001)
    js = [cell_index(u, r) for u in us]
    assert all(b - a in (0, 1) for a, b in zip(js, js[1:]))
    for k in range(1, 9):
        boundary = k - 1 + r
        assert cell_index(boundary - 1e-9, r) + 1 == cell_index(boundary + 1e-9, r)


def test_cell_distribution_chi_square():
    h = hash64_u64(np.arange(10**6), 9)
    _, num = split_many(h, 1)
    cells = cells_from_numerators(num, 1.0)
    kmax = 15
    obs = np.array([np.sum(cells == k) for k in range(1, kmax)] + [np.sum(cells >= kmax)])
    p = np.array([2.0**-k for k in range(1, kmax)] + [2.0 ** -(kmax - 1)])
    assert stats.chisquare(obs, p * obs.sum()).pvalue > 1e-4


def test_exact_cells_agree_with_float_formula():
    rng = np.random.default_rng(4)
    num = rng.integers(1, 2**44 + 1, 20000)
    r = rng.random(20000)
    exact = cells_from_numerators(num, np.exp2(-r))
    u = hashing.FRACTION_BITS - np.log2(num.astype(np.float64))
    approx = np.floor(u - r).astype(np.int64) + 1
    # only exact ties can differ, and random doubles never land on them
    assert np.mean(exact == approx) == 1.0
    # v = 1/2 is the closed top of cell 2
    assert cells_from_numerators(np.array([2**43]), 1.0)[0] == 2
    assert cells_from_numerators(np.array([2**43 + 1]), 1.0)[0] == 1
    assert cells_from_numerators(np.array([2**43 - 1]), 1.0)[0] == 2
    assert cells_from_numerators(np.array([2**44]), 1.0)[0] == 1
