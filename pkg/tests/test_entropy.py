import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apcc.entropy import PROB_HALF, ArithmeticDecoder, ArithmeticEncoder
from apcc.errors import BitstreamUnderrun, ContextIndexError, CorruptStream, RangeError


def bits_per_symbol(data, n):
    return len(data) * 8 / n


def test_all_zero_run_is_nearly_free():
    enc = ArithmeticEncoder(1)
    for _ in range(10_000):
        enc.encode_bin(0, 0)
    data = enc.finish()
    assert len(data) < 100
    dec = ArithmeticDecoder(data, 1)
    assert all(dec.decode_bin(0) == 0 for _ in range(10_000))


def test_alternating_bins_stay_near_one_bit():
    enc = ArithmeticEncoder(1)
    for i in range(10_000):
        enc.encode_bin(0, i & 1)
    assert bits_per_symbol(enc.finish(), 10_000) >= 0.99


def test_bypass_costs_one_bit_each():
    rng = np.random.default_rng(3)
    enc = ArithmeticEncoder(1)
    bits = rng.integers(0, 2, 64)
    for b in bits:
        enc.encode_bypass(b)
    data = enc.finish()
    empty = ArithmeticEncoder(1).finish()
    assert abs((len(data) - len(empty)) * 8 - 64) <= 8
    dec = ArithmeticDecoder(data, 1)
    assert [dec.decode_bypass() for _ in range(64)] == bits.tolist()


def test_random_bypass_roundtrip_10k():
    rng = np.random.default_rng(4)
    bits = rng.integers(0, 2, 10_000)
    enc = ArithmeticEncoder(1)
    for b in bits:
        enc.encode_bypass(b)
    dec = ArithmeticDecoder(enc.finish(), 1)
    assert [dec.decode_bypass() for _ in range(len(bits))] == bits.tolist()


def test_empty_flush_is_small():
    assert len(ArithmeticEncoder(4).finish()) <= 5


def test_uint_zero_is_one_prefix_bin():
    a = ArithmeticEncoder(8)
    a.encode_uint(0, 0)
    b = ArithmeticEncoder(8)
    b.encode_bin(0, 0)
    assert a.finish() == b.finish()
    assert a.probs[0] > PROB_HALF and np.all(a.probs[1:] == PROB_HALF)


def test_uint_exhaustive_byte_range():
    enc = ArithmeticEncoder(16)
    for v in range(256):
        enc.encode_uint(v, 8)
    dec = ArithmeticDecoder(enc.finish(), 16)
    assert [dec.decode_uint(8) for _ in range(256)] == list(range(256))


def test_uint_extremes_and_signed():
    vals = [0, 1, 2**31, 2**32 - 1]
    enc = ArithmeticEncoder(9)
    for v in vals:
        enc.encode_uint(v, 0)
    for v in (-5, 0, 7, -(2**32) + 1):
        enc.encode_sint(v, 0, 8)
    dec = ArithmeticDecoder(enc.finish(), 9)
    assert [dec.decode_uint(0) for _ in vals] == vals
    assert [dec.decode_sint(0, 8) for _ in range(4)] == [-5, 0, 7, -(2**32) + 1]


def test_geometric_source_near_entropy():
    rng = np.random.default_rng(5)
    vals = rng.geometric(0.5, 50_000) - 1
    enc = ArithmeticEncoder(8)
    for v in vals:
        enc.encode_uint(v, 0)
    _, counts = np.unique(vals, return_counts=True)
    p = counts / counts.sum()
    h = -(p * np.log2(p)).sum() * len(vals)
    assert len(enc.finish()) * 8 <= 1.10 * h


def test_sint_batch_matches_scalar_calls():
    rng = np.random.default_rng(6)
    vals = rng.integers(-300, 300, 2000)
    bases = rng.integers(0, 3, 2000) * 8
    signs = 24 + rng.integers(0, 2, 2000)
    a = ArithmeticEncoder(26)
    a.encode_sint_batch(vals, bases, signs)
    b = ArithmeticEncoder(26)
    for v, c, s in zip(vals, bases, signs):
        b.encode_sint(v, int(c), int(s))
    data = a.finish()
    assert data == b.finish()
    out = ArithmeticDecoder(data, 26).decode_sint_batch(2000, bases, signs)
    assert np.array_equal(out, vals)


ops = st.lists(
    st.one_of(
        st.tuples(st.just("bin"), st.integers(0, 5), st.integers(0, 1)),
        st.tuples(st.just("bypass"), st.just(0), st.integers(0, 1)),
        st.tuples(st.just("uint"), st.integers(0, 2), st.integers(0, 5000)),
        st.tuples(st.just("bits"), st.integers(1, 24), st.integers(0, 2**24 - 1)),
    ),
    max_size=300,
)


@settings(max_examples=150, deadline=None)
@given(ops, st.integers(3, 7))
def test_mixed_interleavings_roundtrip(seq, rate):
    enc = ArithmeticEncoder(24, adapt_rate=rate, capacity=64)
    for kind, a, b in seq:
        if kind == "bin":
            enc.encode_bin(a, b)
        elif kind == "bypass":
            enc.encode_bypass(b)
        elif kind == "uint":
            enc.encode_uint(b, a * 8)
        else:
            enc.encode_bits(b & ((1 << a) - 1), a)
    dec = ArithmeticDecoder(enc.finish(), 24, adapt_rate=rate)
    for kind, a, b in seq:
        if kind == "bin":
            assert dec.decode_bin(a) == b
        elif kind == "bypass":
            assert dec.decode_bypass() == b
        elif kind == "uint":
            assert dec.decode_uint(a * 8) == b
        else:
            assert dec.decode_bits(a) == b & ((1 << a) - 1)


def test_finish_is_idempotent():
    enc = ArithmeticEncoder(2)
    enc.encode_bin(1, 1)
    assert enc.finish() == enc.finish()


def test_context_bounds_checked():
    enc = ArithmeticEncoder(4)
    with pytest.raises(ContextIndexError):
        enc.encode_bin(4, 0)
    with pytest.raises(ContextIndexError):
        enc.encode_uint(1, 0)  # prefix needs 8 contexts
    with pytest.raises(RangeError):
        ArithmeticEncoder(8).encode_uint(-1, 0)
    dec = ArithmeticDecoder(b"\x00" * 8, 4)
    with pytest.raises(ContextIndexError):
        dec.decode_bin(-1)


def test_reading_past_the_end_is_an_underrun():
    enc = ArithmeticEncoder(1)
    for _ in range(40):
        enc.encode_bypass(1)
    data = enc.finish()
    with pytest.raises(BitstreamUnderrun):
        ArithmeticDecoder(data[:2], 1)
    dec = ArithmeticDecoder(data[:6], 1)
    with pytest.raises(BitstreamUnderrun):
        for _ in range(40):
            dec.decode_bypass()


def test_runaway_uint_prefix_is_corrupt():
    # an all-ones code register decodes 1 from every prefix bin
    dec = ArithmeticDecoder(b"\xff" * 64, 8)
    with pytest.raises(CorruptStream):
        dec.decode_uint(0)


def test_small_initial_buffer_grows():
    enc = ArithmeticEncoder(1, capacity=1)
    rng = np.random.default_rng(8)
    bits = rng.integers(0, 2, 5000)
    for b in bits:
        enc.encode_bin(0, b)
    dec = ArithmeticDecoder(enc.finish(), 1)
    assert [dec.decode_bin(0) for _ in bits] == bits.tolist()


def test_skewed_source_entropy_bound():
    rng = np.random.default_rng(9)
    p1 = 0.05
    bits = (rng.random(100_000) < p1).astype(int)
    enc = ArithmeticEncoder(1)
    for b in bits:
        enc.encode_bin(0, b)
    q = bits.mean()
    h = -(q * math.log2(q) + (1 - q) * math.log2(1 - q)) * len(bits)
    assert len(enc.finish()) * 8 <= 1.10 * h
