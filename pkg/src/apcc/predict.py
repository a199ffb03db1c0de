"""Interpolation-based attribute prediction over levels of detail.

Points are split into LoD levels (level 1 coarsest) and coded coarse to
fine, each level in space-filling-curve order.  Every point is predicted
from a small reference set of reconstructed points:

1. a cache of the ``M`` allowed points nearest in curve rank;
2. from the cache, the ``2k`` entries closest in Morton code, and the
   ``2k`` closest in Morton code of the coordinates shifted by ``C``;
3. those candidates, fed in coding order into a ``k``-slot reference set
   that evicts its member farthest (L1) from the current point.

The prediction is an inverse-distance weighted average; the quantised
residual is coded with sign and magnitude bins.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .curves import check_theta, CurveOrder, curve_depth, hilbert_codes, morton_codes
from .entropy import ArithmeticEncoder, check_decoder, dec_sint, enc_sint
from .errors import CorruptStream, EmptyInput
from .transform import QP_MAX, quant_step


@dataclass(frozen=True)
class PredictConfig:
    order: CurveOrder = CurveOrder.MORTON
    cache_size_m: int = 128
    offset_c: int = 1
    lod_shift_k: Optional[int] = None  # None: pick by sampling_target
    lod_levels_n: int = 1
    intra_layer: bool = True
    max_neighbors: int = 3
    sampling_target: float = 0.6
    cross_attr_lambda: float = 0.5
    hilbert_theta: float = 1.0
    qp: int = 0

    def __post_init__(self):
        if self.max_neighbors < 1 or self.cache_size_m < self.max_neighbors:
            raise ValueError("need 1 <= max_neighbors <= cache_size_m")
        if self.offset_c < 1:
            raise ValueError("offset_c must be positive")
        if self.lod_levels_n < 1:
            raise ValueError("lod_levels_n must be >= 1")
        if self.lod_shift_k is not None and self.lod_shift_k < 0:
            raise ValueError("lod_shift_k must be >= 0")
        if not 0 < self.sampling_target <= 1:
            raise ValueError("sampling_target must be in (0, 1]")
        if self.cross_attr_lambda < 0:
            raise ValueError("cross_attr_lambda must be >= 0")
        if not 0 <= self.qp <= QP_MAX:
            raise ValueError(f"qp must be in [0, {QP_MAX}]")
        check_theta(self.hilbert_theta)


# --- level of detail -------------------------------------------------------------

def curve_rank(voxels, cfg: PredictConfig):
    """Position of each point in the configured curve order."""
    v = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    if cfg.order == CurveOrder.MORTON:
        codes = morton_codes(v)
    else:
        codes = hilbert_codes(v, curve_depth(v, cfg.hilbert_theta), cfg.hilbert_theta)
    order = np.argsort(codes, kind="stable")
    rank = np.empty(len(v), dtype=np.int64)
    rank[order] = np.arange(len(v))
    return rank


def auto_lod_shift(voxels, target=0.6):
    """Smallest K for which at least ``target`` of the points share their
    ``2**K`` block with another point."""
    v = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    codes = morton_codes(v)
    max_k = max(1, int(v.max()).bit_length()) if len(v) else 1
    for k in range(max_k + 1):
        _, inv, counts = np.unique(codes >> np.uint64(3 * k), return_inverse=True, return_counts=True)
        if np.mean(counts[inv] >= 2) >= target:
            return k
    return max_k


def build_lod(voxels, rank, n_levels, k):
    """Level per point (1 = coarsest, ``n_levels`` = finest).

    Each pass keeps the first point (in curve order) of every block of the
    current members and promotes it one level up; blocks grow by ``2**k``
    per side with every pass.
    """
    v = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    codes = morton_codes(v)
    level = np.full(len(v), n_levels, dtype=np.int64)
    members = np.argsort(rank, kind="stable")
    for n in range(n_levels - 1, 0, -1):
        shift = np.uint64(min(63, 3 * k * (n_levels - n)))
        _, first = np.unique(codes[members] >> shift, return_index=True)
        members = members[np.sort(first)]
        level[members] = n
    return level


def coding_order(level, rank):
    """Coarse levels first, curve order within a level."""
    return np.lexsort((rank, level))


# --- reference helpers (mirrors of the jitted logic, used by tests/demos) ------------

def double_morton_candidates(i, voxels, cfg: PredictConfig, cache=None):
    """Candidate coding indices for point ``i`` of a cloud in coding order.

    ``cache`` defaults to the ``M`` points coded just before ``i``.
    """
    v = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    if cache is None:
        cache = np.arange(max(0, i - cfg.cache_size_m), i)
    cache = np.asarray(cache, dtype=np.int64)
    if len(cache) == 0:
        return set()
    take = 2 * cfg.max_neighbors
    out = set()
    for shift in (0, cfg.offset_c):
        codes = morton_codes(v[np.r_[cache, i]] + shift).astype(np.int64)
        diff = np.abs(codes[:-1] - codes[-1])
        sel = np.lexsort((cache, diff))[:take]
        out.update(int(c) for c in cache[sel])
    return out


class ReferenceSet:
    """At most ``capacity`` points; when full a new point replaces the member
    farthest from the query, and only if it is strictly nearer."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.members = []  # (distance, insertion_seq, payload)
        self._seq = 0

    def update(self, distance, payload):
        entry = (distance, self._seq, payload)
        self._seq += 1
        if len(self.members) < self.capacity:
            self.members.append(entry)
            return True
        worst = max(range(len(self.members)), key=lambda j: (self.members[j][0], self.members[j][1]))
        if distance < self.members[worst][0]:
            self.members[worst] = entry
            return True
        return False

    def payloads(self):
        return [m[2] for m in self.members]


def predict_point(distances, values, midpoint):
    """Weighted mean with ``w = 1 / (1 + d)``; ``midpoint`` if there is no predictor."""
    values = np.asarray(values, dtype=np.float64)
    if len(distances) == 0:
        return np.asarray(midpoint, dtype=np.float64)
    w = 1.0 / (1.0 + np.asarray(distances, dtype=np.float64))
    return (w[:, None] * values.reshape(len(w), -1)).sum(axis=0) / w.sum()


# --- jitted coding kernel ------------------------------------------------------------
MAX_CHANNELS = 4
_CTX_STRIDE = 9
NUM_CONTEXTS = MAX_CHANNELS * 2 * _CTX_STRIDE


@njit(cache=True)
def _round_away(x):
    return np.floor(x + 0.5) if x >= 0 else -np.floor(-x + 0.5)


@njit(cache=True)
def _select_nearest(codes, cache, cnt, target, take, mark, stamp):
    # stamp the `take` cache entries with the smallest |code - target|, ties to lower index
    for _ in range(min(take, cnt)):
        best = -1
        best_d = np.int64(0)
        for s in range(cnt):
            j = cache[s]
            if mark[j] == stamp:
                continue
            d = abs(codes[j] - target)
            if best < 0 or d < best_d or (d == best_d and j < best):
                best = j
                best_d = d
        mark[best] = stamp


@njit(cache=True)
def _in(arr, n, x):
    for t in range(n):
        if arr[t] == x:
            return True
    return False


@njit(cache=True)
def _predict_kernel(decode, st, buf, probs, pos, code1, code2, rank, level, values, rec, pred_out,
                    aux, lam, mids, lo, hi, step, cache_m, k, intra):
    """All arrays are in coding order.  Returns False on a decoder error."""
    n, nch = rec.shape
    naux = aux.shape[1]
    mark = np.full(n, -1, np.int64)
    cache = np.empty(cache_m, np.int64)
    ref_idx = np.empty(k, np.int64)
    ref_d = np.empty(k, np.int64)
    prev_zero = np.zeros(MAX_CHANNELS, np.int64)
    cand = np.empty(4 * k, np.int64)
    # rank -> coding index
    r2c = np.empty(n, np.int64)
    for i in range(n):
        r2c[rank[i]] = i
    start = 0
    coarse = np.empty(0, np.int64)
    for i in range(n):
        if i == 0 or level[i] != level[i - 1]:
            start = i
            coarse = np.sort(rank[:i])
        r = rank[i]
        # cache: allowed points nearest in curve rank (coarser levels, plus
        # earlier points of this level when intra-layer prediction is on)
        ra = np.searchsorted(coarse, r)
        la = ra - 1
        lb = i - 1 if intra else start - 1
        cnt = 0
        while cnt < cache_m:
            left = -1
            from_b = False
            if la >= 0:
                left = coarse[la]
            if lb >= start and rank[lb] > left:
                left = rank[lb]
                from_b = True
            right = coarse[ra] if ra < coarse.shape[0] else -1
            if left < 0 and right < 0:
                break
            if right < 0 or (left >= 0 and r - left <= right - r):
                if from_b:
                    cache[cnt] = lb
                    lb -= 1
                else:
                    cache[cnt] = r2c[left]
                    la -= 1
            else:
                cache[cnt] = r2c[right]
                ra += 1
            cnt += 1
        # double Morton candidates
        nc = 0
        if cnt > 0:
            _select_nearest(code1, cache, cnt, code1[i], 2 * k, mark, 2 * i)
            for s in range(cnt):
                if mark[cache[s]] == 2 * i:
                    cand[nc] = cache[s]
                    nc += 1
            _select_nearest(code2, cache, cnt, code2[i], 2 * k, mark, 2 * i + 1)
            for s in range(cnt):
                j = cache[s]
                if mark[j] == 2 * i + 1 and not _in(cand, nc, j):
                    cand[nc] = j
                    nc += 1
        cand[:nc].sort()
        # reference set, fed in coding order
        size = 0
        for t in range(nc):
            j = cand[t]
            d = abs(pos[j, 0] - pos[i, 0]) + abs(pos[j, 1] - pos[i, 1]) + abs(pos[j, 2] - pos[i, 2])
            if size < k:
                ref_idx[size] = j
                ref_d[size] = d
                size += 1
                continue
            worst = 0
            for s in range(1, size):
                if ref_d[s] > ref_d[worst] or (ref_d[s] == ref_d[worst] and ref_idx[s] > ref_idx[worst]):
                    worst = s
            if d < ref_d[worst]:
                ref_idx[worst] = j
                ref_d[worst] = d
        # canonical (distance, index) order so the float sum is slot independent
        for s in range(1, size):
            t = s
            while t > 0 and (ref_d[t - 1] > ref_d[t] or (ref_d[t - 1] == ref_d[t] and ref_idx[t - 1] > ref_idx[t])):
                ref_d[t - 1], ref_d[t] = ref_d[t], ref_d[t - 1]
                ref_idx[t - 1], ref_idx[t] = ref_idx[t], ref_idx[t - 1]
                t -= 1
        for c in range(nch):
            if size == 0:
                pred = mids[c]
            else:
                num = 0.0
                den = 0.0
                for s in range(size):
                    j = ref_idx[s]
                    d = np.float64(ref_d[s])
                    if lam > 0.0:
                        extra = 0
                        for a in range(naux):
                            extra += abs(aux[i, a] - aux[j, a])
                        d += lam * extra
                    w = 1.0 / (1.0 + d)
                    num += w * rec[j, c]
                    den += w
                pred = num / den
            p_int = np.int64(_round_away(pred))
            pred_out[i, c] = p_int
            z = prev_zero[c]
            base = (c * 2 + z) * _CTX_STRIDE
            if decode:
                q = dec_sint(st, buf, probs, base, base + 8)
            else:
                res = values[i, c] - p_int
                q = res if step == 1.0 else np.int64(_round_away(res / step))
                enc_sint(st, buf, probs, q, base, base + 8)
            prev_zero[c] = 1 if q == 0 else 0
            v = p_int + (q if step == 1.0 else np.int64(_round_away(q * step)))
            rec[i, c] = min(max(v, lo[c]), hi[c])
        if decode and (st[4] or st[6]):
            return False
    return True


@dataclass
class PredictPlan:
    """Everything both sides derive from geometry: coding order and levels."""

    order: np.ndarray  # coding index -> input index
    level: np.ndarray  # per input point
    rank: np.ndarray  # per input point
    lod_shift_k: int


def plan_prediction(voxels, cfg: PredictConfig, lod_shift_k=None) -> PredictPlan:
    v = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    if len(v) == 0:
        raise EmptyInput("no points to predict")
    k = lod_shift_k if lod_shift_k is not None else cfg.lod_shift_k
    if k is None:
        k = auto_lod_shift(v, cfg.sampling_target) if cfg.lod_levels_n > 1 else 0
    rank = curve_rank(v, cfg)
    level = build_lod(v, rank, cfg.lod_levels_n, k)
    return PredictPlan(coding_order(level, rank), level, rank, int(k))


def _run(decode, coder, voxels, plan: PredictPlan, cfg: PredictConfig, values, nch, lo, hi, mids, aux,
         want_pred=False):
    v = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    o = plan.order
    pos = np.ascontiguousarray(v[o])
    code1 = morton_codes(pos).astype(np.int64)
    code2 = morton_codes(pos + cfg.offset_c).astype(np.int64)
    rank = np.ascontiguousarray(plan.rank[o])
    level = plan.level[o]
    rec = np.zeros((len(v), nch), dtype=np.int64)
    pred = np.zeros_like(rec)
    vals = rec if decode else np.ascontiguousarray(np.asarray(values, dtype=np.int64).reshape(len(v), nch)[o])
    if aux is None:
        aux_o = np.zeros((len(v), 0), dtype=np.int64)
        lam = 0.0
    else:
        aux_o = np.ascontiguousarray(np.asarray(aux, dtype=np.int64).reshape(len(v), -1)[o])
        lam = float(cfg.cross_attr_lambda)
    step = 1.0 if cfg.qp == 0 else quant_step(cfg.qp)
    if not decode:
        coder.reserve(len(v) * nch * 16 + 64)
    ok = _predict_kernel(decode, coder.st, coder.buf, coder.probs, pos, code1, code2, rank, level, vals, rec,
                         pred, aux_o, lam, np.asarray(mids, np.float64), np.asarray(lo, np.int64),
                         np.asarray(hi, np.int64), step, cfg.cache_size_m, cfg.max_neighbors, cfg.intra_layer)
    if decode:
        check_decoder(coder.st, "predicted attributes")
        if not ok:
            raise CorruptStream("prediction decode stopped early")
    out = np.empty_like(rec)
    out[o] = rec
    if want_pred:
        p = np.empty_like(pred)
        p[o] = pred
        return out, p
    return out


def encode_attributes(voxels, values, plan, cfg: PredictConfig, enc, lo, hi, mids, aux=None):
    """Code integer ``values`` (n, channels); returns the reconstruction (input order).

    ``aux`` is an already coded attribute (reconstructed) used in the
    comprehensive distance.
    """
    values = np.asarray(values, dtype=np.int64)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[1] > MAX_CHANNELS:
        raise ValueError(f"at most {MAX_CHANNELS} channels")
    return _run(False, enc, voxels, plan, cfg, values, values.shape[1], lo, hi, mids, aux)


def predictions(voxels, values, plan, cfg: PredictConfig, lo, hi, mids, aux=None):
    """Integer prediction of every point and channel (input order), from a scratch encode."""
    values = np.asarray(values, dtype=np.int64)
    if values.ndim == 1:
        values = values[:, None]
    enc = ArithmeticEncoder(NUM_CONTEXTS)
    return _run(False, enc, voxels, plan, cfg, values, values.shape[1], lo, hi, mids, aux, want_pred=True)[1]


def decode_attributes(voxels, n_channels, plan, cfg: PredictConfig, dec, lo, hi, mids, aux=None):
    if not 1 <= n_channels <= MAX_CHANNELS:
        raise CorruptStream("bad attribute channel count")
    return _run(True, dec, voxels, plan, cfg, None, n_channels, lo, hi, mids, aux)
