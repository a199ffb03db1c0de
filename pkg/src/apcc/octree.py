"""Octree geometry coding with implicit BT/QT/OT partitioning.

The tree is traversed breadth first; children are visited in ascending
octant order (``x | y << 1 | z << 2``).  Within a level that order is the
order of a bit-interleaved path key, so every neighbour with no coordinate
larger than the current node has already been coded.

Level structure (which nodes exist, their neighbours, spans) is computed
with vectorised numpy; only the bin coding loop, which depends on adaptive
state, runs in a jitted kernel shared by encoder and decoder.
"""
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

from . import entropy
from .curves import morton_codes
from .entropy import check_decoder, dec_bin, dec_bits, dec_bypass, enc_bin, enc_bits, enc_bypass
from .errors import CorruptStream


class ContextSet(Enum):
    SPARSE = 0
    DENSE = 1
    # every occupancy bin at probability 1/2; a baseline for measuring context gain
    FLAT = 2


@dataclass(frozen=True)
class OctreeConfig:
    k_layers: int = 0
    m_layers: int = 0
    isolated_mode: bool = False
    isolated_layer_ratio: float = 0.25
    context_set: ContextSet = ContextSet.SPARSE
    planar_mode: bool = False
    planar_density_threshold: float = 3.0

    def __post_init__(self):
        if self.k_layers < 0 or self.m_layers < 0:
            raise ValueError("k_layers and m_layers must be non-negative")
        if not (self.isolated_layer_ratio > 0 and self.planar_density_threshold > 0):
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class PlanLevel:
    stage: int
    split_axes: tuple

    @property
    def split_mask(self):
        return sum(1 << a for a in self.split_axes)

    @property
    def occupancy_bits(self):
        return 1 << len(self.split_axes)


def build_partition_plan(bit_depths, cfg: OctreeConfig):
    """Derive the per-level split axes from the bounding box and (K, M).

    Stage 1 (first K levels) and stage 3 equalise the box by splitting only
    the largest axes; stage 2 and stage 4 split every axis still larger
    than one voxel.  Size-1 axes are never split.
    """
    r = [int(d) for d in bit_depths]
    plan = []

    def equalize():
        m = max(r)
        return tuple(a for a in range(3) if r[a] == m)

    def split_all():
        return tuple(a for a in range(3) if r[a] > 0)

    def push(stage, axes):
        for a in axes:
            r[a] -= 1
        plan.append(PlanLevel(stage, axes))

    for _ in range(cfg.k_layers):
        if max(r) == 0:
            break
        push(1, equalize())
    while max(r) > 0 and min(r) > cfg.m_layers:
        push(2, split_all())
    while max(r) > cfg.m_layers:
        push(3, equalize())
    while max(r) > 0:
        push(4, split_all())
    return plan


def remaining_sizes(bit_depths, plan):
    """Log2 node size per axis before each level (``len(plan) + 1`` rows)."""
    r = np.array(bit_depths, dtype=np.int64)
    out = [r.copy()]
    for lvl in plan:
        for a in lvl.split_axes:
            r[a] -= 1
        out.append(r.copy())
    return np.array(out, dtype=np.int64).reshape(-1, 3)


# --- context layout ------------------------------------------------------------
BANK = 1024
PLANAR_BASE = 3 * BANK
PLANAR_CTX = 12 * 128
ISO_BASE = PLANAR_BASE + PLANAR_CTX
NUM_CONTEXTS = ISO_BASE + 7

# neighbour table columns: faces -x, +x, -y, +y, -z, +z, then the two coded
# edge neighbours used (with the three negative faces) as planar references
_NB_OFFSETS = np.array(
    [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1), (-1, -1, 0), (0, -1, -1)],
    dtype=np.int64,
)
_PLANAR_REFS = np.array([0, 2, 4, 6, 7], dtype=np.int64)
# sibling relations: 3 coplanar, 3 co-edge, 1 co-point
_SIB_REL = np.array([1, 2, 4, 3, 5, 6, 7], dtype=np.int64)


@njit(cache=True)
def _sibling_bits(octant, coded_occ):
    s = 0
    for j in range(7):
        s |= ((coded_occ >> (octant ^ _SIB_REL[j])) & 1) << j
    return s


@njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        c += x & 1
        x >>= 1
    return c


@njit(cache=True)
def _bin_context(octant, split_mask, coded_occ, nb_row, ctx_set):
    """Context index in ``[0, 1024)`` for one occupancy bin (bank excluded)."""
    sib = _sibling_bits(octant, coded_occ)
    near = 0
    far = 0
    for a in range(3):
        side = (octant >> a) & 1 if (split_mask >> a) & 1 else 0
        if nb_row[2 * a + side] >= 0:
            near |= 1 << a
        if nb_row[2 * a + 1 - side] >= 0:
            far |= 1 << a
    if ctx_set == 0:
        return sib | (near << 7)
    n_face = _popcount(sib & 7)
    n_other = min(3, _popcount(sib >> 3))
    return n_face | (n_other << 2) | (near << 4) | (far << 7)


@njit(cache=True)
def _face_free(nb, i):
    for j in range(6):
        if nb[i, j] >= 0:
            return False
    return True


@njit(cache=True)
def _planar_reference(ref_codes, split_mask):
    """First reference with > 3 occupied children and an empty half.

    Returns ``(axis, empty_half)`` or ``(-1, -1)``.
    """
    for k in range(ref_codes.shape[0]):
        c = ref_codes[k]
        if c < 0 or _popcount(c) <= 3:
            continue
        for a in range(3):
            if not (split_mask >> a) & 1:
                continue
            lower = 0
            upper = 0
            for o in range(8):
                if (o & ~split_mask) == 0:
                    if (o >> a) & 1:
                        upper |= 1 << o
                    else:
                        lower |= 1 << o
            if c & lower == 0:
                return a, 0
            if c & upper == 0:
                return a, 1
    return -1, -1


@njit(cache=True)
def _code_level(decode, st, buf, probs, codes, iso_flag, iso_bits, nb, split_mask, rem,
                ctx_set, planar_on, iso_open):
    """Code (or decode) the occupancy of every node of one level, in order.

    In an open isolated level a flag is coded for nodes without occupied face
    neighbours.  ``iso_flag`` is -1 where no flag is coded, else 0/1.  On decode
    ``codes``/``iso_flag``/``iso_bits`` are outputs.
    """
    n = codes.shape[0]
    kind = _popcount(split_mask) - 1
    refs = np.empty(5, dtype=np.int64)
    # highest octant present under the split mask; inferred when all others are empty
    last_oct = split_mask
    for i in range(n):
        if iso_open and _face_free(nb, i):
            ctx = ISO_BASE + kind + (3 if (nb[i, 6] >= 0 or nb[i, 7] >= 0) else 0)
            if decode:
                flag = dec_bin(st, buf, probs, ctx)
                iso_flag[i] = flag
            else:
                flag = iso_flag[i]
                enc_bin(st, buf, probs, ctx, flag)
            if flag:
                for a in range(3):
                    if decode:
                        iso_bits[i, a] = dec_bits(st, buf, rem[a])
                    else:
                        enc_bits(st, buf, iso_bits[i, a], rem[a])
                codes[i] = 0
                if decode and st[4]:
                    return
                continue
        p_axis = -1
        p_half = -1
        if planar_on:
            for k in range(5):
                j = nb[i, _PLANAR_REFS[k]]
                refs[k] = codes[j] if (j >= 0 and j < i) else -1
            p_axis, p_half = _planar_reference(refs, split_mask)
        coded_occ = 0
        for o in range(8):
            if o & ~split_mask:
                continue
            if o == last_oct and coded_occ == 0:
                coded_occ |= 1 << o
                continue
            if ctx_set == 2:
                if decode:
                    bit = dec_bypass(st, buf)
                else:
                    bit = (codes[i] >> o) & 1
                    enc_bypass(st, buf, bit)
            else:
                if p_axis >= 0:
                    child_half = (o >> p_axis) & 1
                    ctx = PLANAR_BASE + ((p_axis * 2 + p_half) * 2 + child_half) * 128 + _sibling_bits(o, coded_occ)
                else:
                    ctx = kind * BANK + _bin_context(o, split_mask, coded_occ, nb[i], ctx_set)
                if decode:
                    bit = dec_bin(st, buf, probs, ctx)
                else:
                    bit = (codes[i] >> o) & 1
                    enc_bin(st, buf, probs, ctx, bit)
            coded_occ |= bit << o
        if decode:
            codes[i] = coded_occ
            if st[4]:
                return


def context_for_bin(octant, split_mask, coded_occupancy, neighbors_present, context_set=ContextSet.SPARSE):
    """Context index of one occupancy bin, for inspection and tests.

    ``neighbors_present`` flags the six face neighbours of the parent node in
    the order -x, +x, -y, +y, -z, +z.
    """
    row = np.array([0 if p else -1 for p in neighbors_present] + [-1, -1], dtype=np.int64)
    return int(_bin_context(int(octant), int(split_mask), int(coded_occupancy), row, int(context_set.value)))


def planar_reference(reference_codes, split_mask):
    """``(axis, empty_half)`` of the first qualifying reference, or ``None``."""
    a, h = _planar_reference(np.asarray(reference_codes, dtype=np.int64), int(split_mask))
    return None if a < 0 else (int(a), int(h))


def isolated_layer_open(n_nodes, n_points, cfg: OctreeConfig):
    """Isolated-point mode is allowed on a level with few nodes per point."""
    return cfg.isolated_mode and n_nodes < cfg.isolated_layer_ratio * n_points


def planar_slice_enabled(bit_depths, n_points, cfg: OctreeConfig):
    """Planar mode gate: box area per point ``V**(2/3) / N`` below the threshold."""
    if not cfg.planar_mode or n_points == 0:
        return False
    t = cfg.planar_density_threshold * n_points
    return math.ldexp(1.0, 2 * int(sum(bit_depths))) < t * t * t


def _neighbor_table(coords):
    n = coords.shape[0]
    keys = coords[:, 0] | (coords[:, 1] << 21) | (coords[:, 2] << 42)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    sc = coords[order]
    nb = np.full((n, _NB_OFFSETS.shape[0]), -1, dtype=np.int64)
    for j, off in enumerate(_NB_OFFSETS):
        ok = np.ones(n, dtype=bool)
        for a in range(3):
            if off[a] < 0:
                ok &= sc[:, a] >= -off[a]
            elif off[a] > 0:
                ok &= sc[:, a] < (1 << 21) - off[a]
        # field-wise addition is exact where no coordinate leaves [0, 2^21); queries stay sorted
        q = sk + (int(off[0]) + (int(off[1]) << 21) + (int(off[2]) << 42))
        pos = np.minimum(np.searchsorted(sk, q), n - 1)
        hit = ok & (sk[pos] == q)
        nb[order[hit], j] = order[pos[hit]]
    return nb


def _path_keys(v, plan, depths):
    key = np.zeros(len(v), dtype=np.int64)
    octs = np.zeros((len(plan), len(v)), dtype=np.uint8)
    r = list(depths)
    for li, lvl in enumerate(plan):
        c = np.zeros(len(v), dtype=np.int64)
        o = np.zeros(len(v), dtype=np.int64)
        for j, a in enumerate(lvl.split_axes):
            bit = (v[:, a] >> (r[a] - 1)) & 1
            c |= bit << j
            o |= bit << a
            r[a] -= 1
        key = (key << len(lvl.split_axes)) | c
        octs[li] = o
    return key, octs


@dataclass
class OctreeStats:
    nodes: int = 0
    levels: int = 0
    isolated: int = 0
    planar_enabled: bool = False


def encode_octree(voxels, bit_depths, cfg: OctreeConfig, enc: entropy.ArithmeticEncoder):
    """Encode a deduplicated voxel set; returns :class:`OctreeStats`."""
    v = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    n_points = len(v)
    plan = build_partition_plan(bit_depths, cfg)
    rem = remaining_sizes(bit_depths, plan)
    key, octs = _path_keys(v, plan, bit_depths)
    order = np.argsort(key, kind="stable")
    key, octs, v = key[order], octs[:, order], v[order]
    shifts = np.cumsum([len(l.split_axes) for l in plan][::-1])[::-1].tolist() + [0]

    planar_on = planar_slice_enabled(bit_depths, n_points, cfg)
    stats = OctreeStats(levels=len(plan), planar_enabled=planar_on)
    alive = np.arange(n_points)
    for li, lvl in enumerate(plan):
        node_id = key[alive] >> shifts[li]
        starts = np.flatnonzero(np.r_[True, node_id[1:] != node_id[:-1]])
        counts = np.diff(np.r_[starts, len(alive)])
        first = alive[starts]
        coords = v[first] >> rem[li]
        n_nodes = len(starts)
        codes = np.bitwise_or.reduceat(np.left_shift(1, octs[li, alive].astype(np.int64)), starts)
        iso_open = isolated_layer_open(n_nodes, len(alive), cfg)
        iso_flag = np.full(n_nodes, -1, dtype=np.int64)
        iso_bits = np.zeros((n_nodes, 3), dtype=np.int64)
        nb = _neighbor_table(coords)
        if iso_open:
            single = (counts == 1) & (nb[:, :6] < 0).all(axis=1)
            iso_flag[:] = single
            iso_bits[single] = v[first[single]] & ((1 << rem[li]) - 1)
            codes[single] = 0
            stats.isolated += int(single.sum())
            alive = alive[np.repeat(~single, counts)]
        enc.reserve(n_nodes * (8 * entropy.BYTES_PER_BIN + 16))
        _code_level(False, enc.st, enc.buf, enc.probs, codes, iso_flag, iso_bits, nb,
                    lvl.split_mask, rem[li], cfg.context_set.value, planar_on, iso_open)
        stats.nodes += n_nodes
    return stats


def decode_octree(dec: entropy.ArithmeticDecoder, bit_depths, n_points, cfg: OctreeConfig):
    """Decode ``n_points`` voxels; returned in ascending Morton order."""
    plan = build_partition_plan(bit_depths, cfg)
    rem = remaining_sizes(bit_depths, plan)
    planar_on = planar_slice_enabled(bit_depths, n_points, cfg)
    coords = np.zeros((1, 3), dtype=np.int64)
    isolated = []
    n_iso = 0
    for li, lvl in enumerate(plan):
        n_nodes = len(coords)
        remaining = n_points - n_iso
        if n_nodes > remaining:
            raise CorruptStream(f"level {li} has {n_nodes} nodes for {remaining} points")
        iso_open = isolated_layer_open(n_nodes, remaining, cfg)
        codes = np.zeros(n_nodes, dtype=np.int64)
        iso_flag = np.full(n_nodes, -1, dtype=np.int64)
        iso_bits = np.zeros((n_nodes, 3), dtype=np.int64)
        nb = _neighbor_table(coords)
        _code_level(True, dec.st, dec.buf, dec.probs, codes, iso_flag, iso_bits, nb,
                    lvl.split_mask, rem[li], cfg.context_set.value, planar_on, iso_open)
        check_decoder(dec.st, "geometry")
        if iso_open:
            single = iso_flag == 1
            if single.any():
                isolated.append((coords[single] << rem[li]) | iso_bits[single])
                n_iso += int(single.sum())
        bits = (codes[:, None] >> np.arange(8)) & 1
        parent, octant = np.nonzero(bits)
        child = coords[parent] << np.array([1 if a in lvl.split_axes else 0 for a in range(3)])
        child |= ((octant[:, None] >> np.arange(3)) & 1) * np.array([1 if a in lvl.split_axes else 0 for a in range(3)])
        coords = child
    if len(coords) + n_iso != n_points:
        raise CorruptStream(f"decoded {len(coords) + n_iso} points, header says {n_points}")
    out = np.concatenate([coords] + isolated) if isolated else coords
    return out[np.argsort(morton_codes(out), kind="stable")]
