"""Predictive-tree geometry: a nearest-neighbour chain with residual coding.

The chain starts at the voxel with the smallest Morton code and repeatedly
hops to the nearest point not yet placed (squared Euclidean distance, ties
to the smaller Morton code).  Each point is coded as its per-axis
difference from its predecessor.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

from .curves import morton_codes
from .entropy import (
    ArithmeticDecoder,
    ArithmeticEncoder,
    check_decoder,
    dec_bits,
    dec_bin,
    dec_uint,
    enc_bin,
    enc_bits,
    enc_uint,
)
from .errors import CorruptStream, EmptyInput

SIGN_BASE = 24
NUM_CONTEXTS = SIGN_BASE + 9


class StartRule(Enum):
    FIRST_MORTON = 0


@dataclass(frozen=True)
class PredTreeConfig:
    kd_leaf_size: int = 8
    start_rule: StartRule = StartRule.FIRST_MORTON

    def __post_init__(self):
        if self.kd_leaf_size < 1:
            raise ValueError("kd_leaf_size must be >= 1")


@dataclass
class PredChain:
    order: np.ndarray  # indices into the source voxel array, chain order
    voxels: np.ndarray  # voxels in chain order

    def __len__(self):
        return len(self.order)

    def residuals(self):
        return np.diff(self.voxels, axis=0)


# --- KD-tree over a shrinking point set ------------------------------------------

@njit(cache=True)
def _kd_build(pts, ids, leaf_size, leaf_of):
    n = ids.shape[0]
    cap = 2 * n + 1
    perm = ids.copy()
    lo = np.zeros(cap, np.int64)
    hi = np.zeros(cap, np.int64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    parent = np.full(cap, -1, np.int64)
    bmin = np.zeros((cap, 3), np.int64)
    bmax = np.zeros((cap, 3), np.int64)
    live = np.zeros(cap, np.int64)
    stack = np.empty(cap, np.int64)
    sp = 0
    count = 1
    lo[0] = 0
    hi[0] = n
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        l = lo[node]
        h = hi[node]
        live[node] = h - l
        for a in range(3):
            mn = pts[perm[l], a]
            mx = mn
            for k in range(l + 1, h):
                v = pts[perm[k], a]
                if v < mn:
                    mn = v
                if v > mx:
                    mx = v
            bmin[node, a] = mn
            bmax[node, a] = mx
        if h - l <= leaf_size:
            for k in range(l, h):
                leaf_of[perm[k]] = node
            continue
        axis = 0
        ext = bmax[node, 0] - bmin[node, 0]
        for a in range(1, 3):
            if bmax[node, a] - bmin[node, a] > ext:
                ext = bmax[node, a] - bmin[node, a]
                axis = a
        sub = perm[l:h].copy()
        key = np.empty(h - l, np.int64)
        for k in range(h - l):
            key[k] = pts[sub[k], axis]
        o = np.argsort(key, kind="mergesort")
        for k in range(h - l):
            perm[l + k] = sub[o[k]]
        mid = (l + h) // 2
        for child, cl, ch in ((count, l, mid), (count + 1, mid, h)):
            lo[child] = cl
            hi[child] = ch
            parent[child] = node
            stack[sp] = child
            sp += 1
        left[node] = count
        right[node] = count + 1
        count += 2
    return perm, lo, hi, left, right, parent, bmin, bmax, live


@njit(cache=True)
def _box_dist(q, bmin, bmax, node):
    d = 0
    for a in range(3):
        if q[a] < bmin[node, a]:
            t = bmin[node, a] - q[a]
            d += t * t
        elif q[a] > bmax[node, a]:
            t = q[a] - bmax[node, a]
            d += t * t
    return d


@njit(cache=True)
def _chain_kernel(pts, codes, root, leaf_size):
    n = pts.shape[0]
    out = np.empty(n, np.int64)
    alive = np.ones(n, np.bool_)
    leaf_of = np.zeros(n, np.int64)
    out[0] = root
    alive[root] = False
    remaining = n - 1
    if remaining == 0:
        return out
    ids = np.empty(remaining, np.int64)
    k = 0
    for i in range(n):
        if alive[i]:
            ids[k] = i
            k += 1
    perm, lo, hi, left, right, parent, bmin, bmax, live = _kd_build(pts, ids, leaf_size, leaf_of)
    built = remaining
    stack = np.empty(2 * n + 2, np.int64)
    q = np.empty(3, np.int64)
    cur = root
    for step in range(1, n):
        if remaining * 2 <= built and remaining > leaf_size:
            ids = np.empty(remaining, np.int64)
            k = 0
            for i in range(n):
                if alive[i]:
                    ids[k] = i
                    k += 1
            perm, lo, hi, left, right, parent, bmin, bmax, live = _kd_build(pts, ids, leaf_size, leaf_of)
            built = remaining
        for a in range(3):
            q[a] = pts[cur, a]
        best = -1
        best_d = np.int64(1) << 62
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if live[node] == 0 or _box_dist(q, bmin, bmax, node) > best_d:
                continue
            if left[node] < 0:
                for j in range(lo[node], hi[node]):
                    p = perm[j]
                    if not alive[p]:
                        continue
                    d = 0
                    for a in range(3):
                        t = pts[p, a] - q[a]
                        d += t * t
                    if d < best_d or (d == best_d and codes[p] < codes[best]):
                        best_d = d
                        best = p
                continue
            l = left[node]
            r = right[node]
            # push the farther child first so the nearer one is explored first
            if _box_dist(q, bmin, bmax, l) <= _box_dist(q, bmin, bmax, r):
                stack[sp] = r
                stack[sp + 1] = l
            else:
                stack[sp] = l
                stack[sp + 1] = r
            sp += 2
        out[step] = best
        alive[best] = False
        node = leaf_of[best]
        while node >= 0:
            live[node] -= 1
            node = parent[node]
        remaining -= 1
        cur = best
    return out


def build_chain(voxels, cfg: PredTreeConfig = PredTreeConfig()) -> PredChain:
    """Order voxels into a nearest-neighbour chain rooted at the first Morton voxel."""
    v = np.ascontiguousarray(voxels, dtype=np.int64).reshape(-1, 3)
    if len(v) == 0:
        raise EmptyInput("cannot build a chain over an empty cloud")
    codes = morton_codes(v).astype(np.int64)
    root = int(np.argmin(codes))
    order = _chain_kernel(v, codes, root, cfg.kd_leaf_size)
    return PredChain(order, v[order])


# --- residual coding -----------------------------------------------------------

@njit(cache=True)
def _code_chain(decode, st, buf, probs, pts, depths, count):
    prev_sign = np.zeros(3, np.int64)
    for a in range(3):
        if decode:
            pts[0, a] = dec_bits(st, buf, depths[a])
        else:
            enc_bits(st, buf, pts[0, a], depths[a])
    for i in range(1, count):
        for a in range(3):
            if decode:
                mag = dec_uint(st, buf, probs, a * 8)
                r = mag
                if mag:
                    neg = dec_bin(st, buf, probs, SIGN_BASE + a * 3 + prev_sign[a])
                    r = -mag if neg else mag
                    prev_sign[a] = 2 if neg else 1
                c = pts[i - 1, a] + r
                if st[4] or st[6]:
                    return i
                if c < 0 or c >= (np.int64(1) << depths[a]):
                    st[6] = 1
                    return i
                pts[i, a] = c
            else:
                r = pts[i, a] - pts[i - 1, a]
                mag = -r if r < 0 else r
                enc_uint(st, buf, probs, mag, a * 8)
                if mag:
                    enc_bin(st, buf, probs, SIGN_BASE + a * 3 + prev_sign[a], 1 if r < 0 else 0)
                    prev_sign[a] = 2 if r < 0 else 1
    return count


def encode_chain(chain: PredChain, bit_depths, enc: ArithmeticEncoder):
    v = np.ascontiguousarray(chain.voxels, dtype=np.int64)
    enc.reserve(len(v) * 24 + 64)
    _code_chain(False, enc.st, enc.buf, enc.probs, v, np.asarray(bit_depths, np.int64), len(v))


def decode_chain(dec: ArithmeticDecoder, bit_depths, count):
    """Decode the first ``count`` chain points, in chain order."""
    pts = np.zeros((count, 3), np.int64)
    if count == 0:
        return pts
    _code_chain(True, dec.st, dec.buf, dec.probs, pts, np.asarray(bit_depths, np.int64), count)
    if dec.st[6]:
        raise CorruptStream("predictive tree residual leaves the bounding box")
    check_decoder(dec.st, "predictive tree")
    return pts


def encode_predtree(voxels, bit_depths, cfg: PredTreeConfig, enc: ArithmeticEncoder) -> PredChain:
    chain = build_chain(voxels, cfg)
    encode_chain(chain, bit_depths, enc)
    return chain


def decode_predtree(dec: ArithmeticDecoder, bit_depths, count):
    """Decode and return voxels in ascending Morton order."""
    pts = decode_chain(dec, bit_depths, count)
    if len(np.unique(morton_codes(pts))) != count:
        raise CorruptStream("predictive tree decoded duplicate voxels")
    return pts[np.argsort(morton_codes(pts), kind="stable")]
