"""Multi-layer pairwise-merge transform for point attributes.

Points are Hilbert sorted and scanned layer by layer.  Close consecutive
pairs merge into a parent through a weighted two-point transform; points
left alone in a layer become prediction points, coded from their already
reconstructed same-layer neighbours.  The stream is decoded top down:
the single top DC, then per layer the AC coefficients of every pair and
the residuals of every prediction point.

Lossy mode works on orthonormal DC coefficients (``sqrt(W) * mean``).
``qp == 0`` switches to integer lifting on the means so the round trip is
exact.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rounding import round_half_away
from .curves import check_theta, curve_depth, hilbert_codes
from .entropy import check_decoder, dec_sint, enc_sint
from .errors import CorruptStream, EmptyInput

# 2**(k/6) for k = 0..5, written as exact binary constants
_STEP_MANTISSA = tuple(
    float.fromhex(h)
    for h in (
        "0x1.0000000000000p+0",
        "0x1.1f59ac3c7d6c0p+0",
        "0x1.428a2f98d728bp+0",
        "0x1.6a09e667f3bcdp+0",
        "0x1.965fea53d6e3cp+0",
        "0x1.c823e074ec129p+0",
    )
)
QP_MAX = 63
MIN_STEP = 1.0 / 256


def quant_step(qp: int) -> float:
    """``2**((qp - 4) / 6)``, clamped below at 1/256."""
    if not 0 <= qp <= QP_MAX:
        raise ValueError(f"qp must be in [0, {QP_MAX}]")
    e, k = divmod(qp - 4, 6)
    return max(MIN_STEP, _STEP_MANTISSA[k] * 2.0**e)


def quantize(coeff, qp):
    return round_half_away(np.asarray(coeff, dtype=np.float64) / quant_step(qp))


def dequantize(q, qp):
    return np.asarray(q, dtype=np.float64) * quant_step(qp)


def pair_transform(a, b, w_a, w_b):
    """Weighted orthonormal two-point transform; returns ``(dc, ac)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    sa, sb, s = np.sqrt(w_a), np.sqrt(w_b), np.sqrt(w_a + w_b)
    return (sa * a + sb * b) / s, (-sb * a + sa * b) / s


def pair_inverse(dc, ac, w_a, w_b):
    dc = np.asarray(dc, dtype=np.float64)
    ac = np.asarray(ac, dtype=np.float64)
    sa, sb, s = np.sqrt(w_a), np.sqrt(w_b), np.sqrt(w_a + w_b)
    return (sa * dc - sb * ac) / s, (sb * dc + sa * ac) / s


def lift_forward(a, b, w_a, w_b):
    """Integer lifting of two means: ``(s, d)`` with ``s`` near the weighted mean."""
    d = b - a
    return a + (d * w_b) // (w_a + w_b), d


def lift_inverse(s, d, w_a, w_b):
    a = s - (d * w_b) // (w_a + w_b)
    return a, a + d


@dataclass(frozen=True)
class TransformConfig:
    initial_distance_threshold: float = 2.0
    threshold_growth: float = 2.0
    small_layer_cutoff: int = 128
    force_merge_fraction: float = 0.5
    qp: int = 0
    hilbert_theta: float = 1.0
    neighbor_window: int = 64

    def __post_init__(self):
        if not self.initial_distance_threshold > 0:
            raise ValueError("initial_distance_threshold must be positive")
        if not self.threshold_growth >= 1:
            raise ValueError("threshold_growth must be >= 1")
        if not 0 <= self.qp <= QP_MAX:
            raise ValueError(f"qp must be in [0, {QP_MAX}]")
        if self.small_layer_cutoff < 1 or not 0 < self.force_merge_fraction <= 1:
            raise ValueError("bad force-merge parameters")
        if self.neighbor_window < 1:
            raise ValueError("neighbor_window must be >= 1")
        check_theta(self.hilbert_theta)


# node roles within a layer
PAIR_FIRST, PAIR_SECOND, CARRIED, PREDICTION = 0, 1, 2, 3


@dataclass
class Layer:
    pos: np.ndarray  # (m, 3) float64, weighted mean of covered points
    weight: np.ndarray  # (m,) int64
    role: np.ndarray  # (m,) role code; the top layer is all CARRIED
    parent: np.ndarray  # (m,) index into the next layer, -1 for prediction points
    forced: bool = False

    def __len__(self):
        return len(self.weight)


@dataclass
class Hierarchy:
    order: np.ndarray  # Hilbert order of the input points (layer 0 index -> input index)
    layers: list

    def layer_sizes(self):
        return [len(l) for l in self.layers]

    def structure_digest(self):
        import hashlib

        h = hashlib.sha256(self.order.tobytes())
        for l in self.layers:
            for arr in (l.pos, l.weight, l.role, l.parent):
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


@njit(cache=True)
def _greedy_scan(pos, thr2):
    m = pos.shape[0]
    role = np.full(m, PREDICTION, np.int64)
    i = 0
    while i < m - 1:
        d = 0.0
        for a in range(3):
            t = pos[i + 1, a] - pos[i, a]
            d += t * t
        if d <= thr2:
            role[i] = PAIR_FIRST
            role[i + 1] = PAIR_SECOND
            i += 2
        else:
            i += 1
    return role


def build_hierarchy(positions, cfg: TransformConfig = TransformConfig()) -> Hierarchy:
    """Hilbert-sort the points and merge them into layers until one node remains."""
    p = np.asarray(positions, dtype=np.int64).reshape(-1, 3)
    if len(p) == 0:
        raise EmptyInput("cannot build a hierarchy over no points")
    depth = curve_depth(p, cfg.hilbert_theta)
    order = np.argsort(hilbert_codes(p, depth, cfg.hilbert_theta), kind="stable")
    pos = p[order].astype(np.float64)
    weight = np.ones(len(p), dtype=np.int64)
    layers = []
    thr = cfg.initial_distance_threshold
    while len(weight) > 1:
        m = len(weight)
        forced = m < cfg.small_layer_cutoff
        if not forced:
            role = _greedy_scan(pos, thr * thr)
            forced = np.count_nonzero(role == PREDICTION) > cfg.force_merge_fraction * m
        if forced:
            role = np.tile(np.array([PAIR_FIRST, PAIR_SECOND]), m // 2 + 1)[:m]
            if m % 2:
                role[-1] = CARRIED
        starts = role != PAIR_SECOND
        starts &= role != PREDICTION
        parent = np.cumsum(starts) - 1
        parent[role == PAIR_SECOND] = parent[np.flatnonzero(role == PAIR_SECOND) - 1]
        parent[role == PREDICTION] = -1
        n_up = int(starts.sum())
        up_w = np.zeros(n_up, dtype=np.int64)
        up_sum = np.zeros((n_up, 3))
        live = parent >= 0
        np.add.at(up_w, parent[live], weight[live])
        np.add.at(up_sum, parent[live], pos[live] * weight[live, None])
        layers.append(Layer(pos, weight, role, parent, bool(forced)))
        pos = up_sum / up_w[:, None]
        weight = up_w
        thr *= cfg.threshold_growth
    layers.append(Layer(pos, weight, np.full(1, CARRIED), np.full(1, -1)))
    return Hierarchy(order, layers)


# --- coefficient coding -----------------------------------------------------------
KIND_DC, KIND_AC, KIND_RES = 0, 1, 2
MAX_CHANNELS = 4
_CTX_STRIDE = 9
NUM_CONTEXTS = 3 * MAX_CHANNELS * 2 * _CTX_STRIDE


@njit(cache=True)
def _round_away(x):
    return np.floor(x + 0.5) if x >= 0 else -np.floor(-x + 0.5)


@njit(cache=True)
def _code_value(decode, st, buf, probs, prev_zero, kind, ch, value):
    z = prev_zero[kind, ch]
    base = ((kind * MAX_CHANNELS + ch) * 2 + z) * _CTX_STRIDE
    if decode:
        value = dec_sint(st, buf, probs, base, base + 8)
    else:
        enc_sint(st, buf, probs, value, base, base + 8)
    prev_zero[kind, ch] = 1 if value == 0 else 0
    return value


@njit(cache=True)
def _code_layer(decode, st, buf, probs, prev_zero, lossless, step,
                orig, rec, parent_rec, pos, weight, role, parent, window):
    """Reconstruct (and code) one layer from its reconstructed parents.

    ``orig`` holds the encoder's coefficients (DCs or integer means) of the
    layer; ``rec`` receives the reconstruction.  Returns False on decoder error.
    """
    m, nch = rec.shape
    for i in range(m):
        r = role[i]
        if r == CARRIED:
            for c in range(nch):
                rec[i, c] = parent_rec[parent[i], c]
        elif r == PAIR_FIRST:
            j = i + 1
            wa = weight[i]
            wb = weight[j]
            sa = np.sqrt(np.float64(wa))
            sb = np.sqrt(np.float64(wb))
            s = np.sqrt(np.float64(wa + wb))
            for c in range(nch):
                par = parent_rec[parent[i], c]
                if lossless:
                    d = 0
                    if not decode:
                        d = np.int64(orig[j, c] - orig[i, c])
                    d = _code_value(decode, st, buf, probs, prev_zero, KIND_AC, c, d)
                    a = np.int64(par) - (d * wb) // (wa + wb)
                    rec[i, c] = a
                    rec[j, c] = a + d
                else:
                    q = 0
                    if not decode:
                        ac = (-sb * orig[i, c] + sa * orig[j, c]) / s
                        q = np.int64(_round_away(ac / step))
                    q = _code_value(decode, st, buf, probs, prev_zero, KIND_AC, c, q)
                    ac_rec = q * step
                    rec[i, c] = (sa * par - sb * ac_rec) / s
                    rec[j, c] = (sb * par + sa * ac_rec) / s
        if decode and (st[4] or st[6]):
            return False
    best_d = np.empty(3, np.float64)
    best_j = np.empty(3, np.int64)
    for i in range(m):
        if role[i] != PREDICTION:
            continue
        nb = 0
        lo = max(0, i - window)
        hi = min(m, i + window + 1)
        for j in range(lo, hi):
            if j == i or (role[j] == PREDICTION and j > i):
                continue
            d = abs(pos[j, 0] - pos[i, 0]) + abs(pos[j, 1] - pos[i, 1]) + abs(pos[j, 2] - pos[i, 2])
            # insertion into a sorted top-3 (ascending distance, then index)
            k = nb
            while k > 0 and best_d[k - 1] > d:
                k -= 1
            if k >= 3:
                continue
            last = min(nb, 2)
            for t in range(last, k, -1):
                best_d[t] = best_d[t - 1]
                best_j[t] = best_j[t - 1]
            best_d[k] = d
            best_j[k] = j
            if nb < 3:
                nb += 1
        sw = np.sqrt(np.float64(weight[i]))
        for c in range(nch):
            pred = 0.0
            if nb > 0:
                num = 0.0
                den = 0.0
                for t in range(nb):
                    j = best_j[t]
                    w = 1.0 / (1.0 + best_d[t])
                    mean = rec[j, c] if lossless else rec[j, c] / np.sqrt(np.float64(weight[j]))
                    num += w * mean
                    den += w
                pred = num / den
            if lossless:
                p_int = np.int64(_round_away(pred))
                res = 0
                if not decode:
                    res = np.int64(orig[i, c]) - p_int
                res = _code_value(decode, st, buf, probs, prev_zero, KIND_RES, c, res)
                rec[i, c] = p_int + res
            else:
                q = 0
                if not decode:
                    q = np.int64(_round_away((orig[i, c] - sw * pred) / step))
                q = _code_value(decode, st, buf, probs, prev_zero, KIND_RES, c, q)
                rec[i, c] = sw * pred + q * step
        if decode and (st[4] or st[6]):
            return False
    return True


def _forward(h: Hierarchy, values, lossless):
    """Per-layer original coefficients, bottom (layer 0) first."""
    cur = values[h.order].astype(np.int64 if lossless else np.float64)
    out = []
    for layer in h.layers[:-1]:
        out.append(cur)
        n_up = int(layer.parent.max()) + 1
        up = np.zeros((n_up, cur.shape[1]), dtype=cur.dtype)
        carried = np.flatnonzero(layer.role == CARRIED)
        up[layer.parent[carried]] = cur[carried]
        i = np.flatnonzero(layer.role == PAIR_FIRST)
        wa, wb = layer.weight[i, None], layer.weight[i + 1, None]
        if lossless:
            s, _ = lift_forward(cur[i], cur[i + 1], wa, wb)
        else:
            s, _ = pair_transform(cur[i], cur[i + 1], wa, wb)
        up[layer.parent[i]] = s
        cur = up
    out.append(cur)
    return out


def _run(decode, coder, h: Hierarchy, cfg: TransformConfig, values, nch):
    lossless = cfg.qp == 0
    step = 1.0 if lossless else quant_step(cfg.qp)
    st, probs = coder.st, coder.probs
    prev_zero = np.zeros((3, MAX_CHANNELS), dtype=np.int64)
    dtype = np.int64 if lossless else np.float64
    coeffs = None if decode else _forward(h, values, lossless)
    parent_rec = np.zeros((1, nch), dtype=dtype)
    for c in range(nch):
        if lossless:
            v = 0 if decode else int(coeffs[-1][0, c])
        else:
            v = 0 if decode else int(round_half_away(coeffs[-1][0, c] / step))
        v = _code_value(decode, st, coder.buf, probs, prev_zero, KIND_DC, c, v)
        parent_rec[0, c] = v if lossless else v * step
    for li in range(len(h.layers) - 2, -1, -1):
        layer = h.layers[li]
        if not decode:
            coder.reserve(len(layer) * nch * 12 + 64)
        rec = np.zeros((len(layer), nch), dtype=dtype)
        orig = rec if decode else coeffs[li]
        ok = _code_layer(decode, st, coder.buf, probs, prev_zero, lossless, step, orig, rec, parent_rec,
                         layer.pos, layer.weight, layer.role, layer.parent, cfg.neighbor_window)
        if not ok:
            check_decoder(st, "transform attributes")
        parent_rec = rec
    if decode:
        check_decoder(st, "transform attributes")
    out = np.empty_like(parent_rec)
    out[h.order] = parent_rec
    return out


def encode_attributes(h: Hierarchy, values, cfg: TransformConfig, enc):
    """Code integer attribute ``values`` (n, channels), given in input order."""
    values = np.asarray(values, dtype=np.int64)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[1] > MAX_CHANNELS:
        raise ValueError(f"at most {MAX_CHANNELS} channels")
    enc.reserve(64)
    rec = _run(False, enc, h, cfg, values, values.shape[1])
    return rec


def decode_attributes(h: Hierarchy, n_channels, cfg: TransformConfig, dec):
    """Reconstruction in input order, as unrounded values (float for lossy)."""
    if not 1 <= n_channels <= MAX_CHANNELS:
        raise CorruptStream("bad attribute channel count")
    return _run(True, dec, h, cfg, None, n_channels)


def finalize(rec, lo, hi):
    """Round a reconstruction to integers and clip per channel to ``[lo, hi]``."""
    return np.clip(round_half_away(rec), lo, hi).astype(np.int64)
