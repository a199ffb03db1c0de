import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apcc import predtree as P
from apcc.core import bit_depths_for
from apcc.curves import morton_codes
from apcc.entropy import PROB_HALF, ArithmeticDecoder, ArithmeticEncoder
from apcc.errors import BitstreamUnderrun, CorruptStream, EmptyInput

from clouds import random_voxels


def brute_chain(v):
    """O(n^2) greedy nearest-neighbour chain: squared distance, ties to smaller Morton code."""
    codes = morton_codes(v).astype(np.int64)
    used = np.zeros(len(v), bool)
    cur = int(np.argmin(codes))
    out = [cur]
    used[cur] = True
    for _ in range(len(v) - 1):
        d = ((v - v[cur]) ** 2).sum(1).astype(np.float64)
        d[used] = np.inf
        ties = np.flatnonzero(d == d.min())
        cur = int(ties[np.argmin(codes[ties])])
        out.append(cur)
        used[cur] = True
    return np.array(out)


def hop_length(pts):
    return np.sqrt((np.diff(pts, axis=0).astype(np.float64) ** 2).sum(1)).sum()


def code(v):
    d = bit_depths_for(v)
    enc = ArithmeticEncoder(P.NUM_CONTEXTS)
    chain = P.encode_predtree(v, d, P.PredTreeConfig(), enc)
    return enc, chain, d


def test_collinear_chain():
    v = np.array([[2, 0, 0], [0, 0, 0], [3, 0, 0], [1, 0, 0]])
    ch = P.build_chain(v)
    assert ch.voxels[:, 0].tolist() == [0, 1, 2, 3]
    assert ch.residuals().tolist() == [[1, 0, 0]] * 3


def test_two_points():
    ch = P.build_chain(np.array([[5, 1, 0], [1, 2, 3]]))
    assert len(ch) == 2
    assert ch.residuals().tolist() == [[4, -1, -3]]


def test_empty_rejected():
    with pytest.raises(EmptyInput):
        P.build_chain(np.zeros((0, 3), dtype=np.int64))


@pytest.mark.parametrize("seed", range(25))
def test_chain_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    v = np.unique(rng.integers(0, int(rng.integers(2, 40)), (int(rng.integers(1, 300)), 3)), axis=0)
    ch = P.build_chain(v, P.PredTreeConfig(kd_leaf_size=int(rng.integers(1, 10))))
    assert np.array_equal(ch.order, brute_chain(v))


def test_chain_shorter_than_reverse_morton():
    v = random_voxels(500, 8, np.random.default_rng(30))
    baseline = v[np.argsort(morton_codes(v))[::-1]]
    assert hop_length(P.build_chain(v).voxels) <= hop_length(baseline)


def test_zero_residual_axes_emit_no_sign():
    v = np.c_[np.arange(256), np.full(256, 5), np.full(256, 9)]
    enc, _, d = code(v)
    signs = enc.probs[P.SIGN_BASE:]
    assert np.all(signs[3:] == PROB_HALF)  # y and z never coded a sign
    assert signs[1] != PROB_HALF  # x: positive after the first hop
    raw_bits = 256 * sum(d)
    assert len(enc.finish()) * 8 < raw_bits / 4


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.tuples(*[st.integers(0, 12)] * 3), st.integers(0, 2**32 - 1))
def test_roundtrip_property(n, depths, seed):
    rng = np.random.default_rng(seed)
    v = np.unique(np.stack([rng.integers(0, 1 << d, n) for d in depths], 1), axis=0)
    enc, _, d = code(v)
    out = P.decode_predtree(ArithmeticDecoder(enc.finish(), P.NUM_CONTEXTS), d, len(v))
    assert np.array_equal(out, v[np.argsort(morton_codes(v))])


def test_large_cloud_builds_quickly():
    v = random_voxels(50_000, 10, np.random.default_rng(31))
    ch = P.build_chain(v)
    assert sorted(ch.order.tolist()) == list(range(len(v)))


def test_decoder_guards():
    v = random_voxels(300, 6, np.random.default_rng(32))
    enc, _, d = code(v)
    data = enc.finish()
    with pytest.raises((BitstreamUnderrun, CorruptStream)):
        P.decode_predtree(ArithmeticDecoder(data[:10], P.NUM_CONTEXTS), d, len(v))
    # a too-small box makes some residual step outside it
    with pytest.raises((CorruptStream, BitstreamUnderrun)):
        P.decode_predtree(ArithmeticDecoder(data, P.NUM_CONTEXTS), (3, 3, 3), len(v))


def test_duplicates_are_rejected():
    # the same point twice: residual (0,0,0) repeats a voxel
    enc = ArithmeticEncoder(P.NUM_CONTEXTS)
    P.encode_chain(P.PredChain(np.arange(2), np.array([[1, 1, 1], [1, 1, 1]])), (2, 2, 2), enc)
    with pytest.raises(CorruptStream):
        P.decode_predtree(ArithmeticDecoder(enc.finish(), P.NUM_CONTEXTS), (2, 2, 2), 2)
