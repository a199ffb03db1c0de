"""Morton (Z-order) and Hilbert space-filling curves over voxel coordinates.

Morton codes interleave bits with x in the lowest position: bit ``3k`` holds
bit ``k`` of x, ``3k+1`` of y and ``3k+2`` of z.  Both encoders are table
driven and vectorised over ``(n, 3)`` integer arrays.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._rounding import round_half_away
from .errors import RangeError

MAX_DEPTH = 21
MAX_THETA = 64.0


def check_theta(theta):
    """Validate a Hilbert z-bias factor; returns it as a float."""
    theta = float(theta)
    if not 0 < theta <= MAX_THETA:
        raise RangeError(f"hilbert_theta must be in (0, {MAX_THETA}], got {theta}")
    return theta


class CurveOrder(Enum):
    MORTON = 0
    HILBERT = 1


@dataclass(frozen=True)
class CurveConfig:
    bit_depth: int = MAX_DEPTH
    hilbert_theta: float = 1.0

    def __post_init__(self):
        if not 1 <= self.bit_depth <= MAX_DEPTH:
            raise RangeError(f"bit_depth must be in [1, {MAX_DEPTH}], got {self.bit_depth}")
        check_theta(self.hilbert_theta)


def _spread_byte(b):
    out = 0
    for k in range(8):
        out |= ((b >> k) & 1) << (3 * k)
    return out


# 8-bit value -> its bits spread to every third position (24 bits)
SPREAD8 = np.array([_spread_byte(b) for b in range(256)], dtype=np.uint64)
# 9-bit Morton chunk -> packed (x3 | y3 << 3 | z3 << 6)
_COMPACT9 = np.zeros(512, dtype=np.uint64)
for _c in range(512):
    _x = _y = _z = 0
    for _k in range(3):
        _x |= ((_c >> (3 * _k)) & 1) << _k
        _y |= ((_c >> (3 * _k + 1)) & 1) << _k
        _z |= ((_c >> (3 * _k + 2)) & 1) << _k
    _COMPACT9[_c] = _x | (_y << 3) | (_z << 6)


def _as_coords(v):
    a = np.asarray(v)
    single = a.ndim == 1
    a = np.atleast_2d(a).astype(np.int64, copy=False)
    if a.shape[-1] != 3:
        raise ValueError("coordinates must have shape (3,) or (n, 3)")
    return a, single


def _check_range(a, depth):
    if not 0 <= depth <= MAX_DEPTH:
        raise RangeError(f"depth must be in [0, {MAX_DEPTH}], got {depth}")
    if a.size and (a.min() < 0 or a.max() >= (1 << depth)):
        raise RangeError(f"coordinate outside [0, 2^{depth})")


def _spread(c):
    c = c.astype(np.uint64)
    s = SPREAD8[c & np.uint64(0xFF)]
    s |= SPREAD8[(c >> np.uint64(8)) & np.uint64(0xFF)] << np.uint64(24)
    s |= SPREAD8[(c >> np.uint64(16)) & np.uint64(0x1F)] << np.uint64(48)
    return s


def morton_codes(coords, depth=MAX_DEPTH):
    """Vectorised Morton encode of an ``(n, 3)`` array; returns ``uint64``."""
    a, _ = _as_coords(coords)
    _check_range(a, depth)
    return _spread(a[:, 0]) | (_spread(a[:, 1]) << np.uint64(1)) | (_spread(a[:, 2]) << np.uint64(2))


def morton_encode(v, depth=MAX_DEPTH):
    """Morton code of one triple (returns ``int``) or of an ``(n, 3)`` array."""
    a, single = _as_coords(v)
    codes = morton_codes(a, depth)
    return int(codes[0]) if single else codes


def morton_decode(code, depth=MAX_DEPTH):
    """Inverse of :func:`morton_encode`."""
    c = np.atleast_1d(np.asarray(code, dtype=np.uint64))
    if depth < MAX_DEPTH and c.size and int(c.max()) >= (1 << (3 * depth)):
        raise RangeError(f"code outside depth {depth}")
    out = np.zeros((c.shape[0], 3), dtype=np.int64)
    for chunk in range(7):
        packed = _COMPACT9[(c >> np.uint64(9 * chunk)) & np.uint64(0x1FF)].astype(np.int64)
        out[:, 0] |= (packed & 7) << (3 * chunk)
        out[:, 1] |= ((packed >> 3) & 7) << (3 * chunk)
        out[:, 2] |= ((packed >> 6) & 7) << (3 * chunk)
    if np.ndim(code) == 0:
        return tuple(int(t) for t in out[0])
    return out


# --- Hilbert -----------------------------------------------------------------
# State (e, d): entry corner e in [0, 8) and intra-cube direction d in [0, 3).

def _gray(i):
    return i ^ (i >> 1)


def _gray_inverse(g):
    i = g
    j = 1
    while (g >> j) > 0:
        i ^= g >> j
        j += 1
    return i


def _trailing_ones(i):
    n = 0
    while i & 1:
        i >>= 1
        n += 1
    return n


def _rotl3(x, r):
    r %= 3
    return ((x << r) | (x >> (3 - r))) & 7


def _rotr3(x, r):
    r %= 3
    return ((x >> r) | (x << (3 - r))) & 7


def _entry(w):
    return 0 if w == 0 else _gray(2 * ((w - 1) // 2))


def _direction(w):
    if w == 0:
        return 0
    if w % 2 == 0:
        return _trailing_ones(w - 1) % 3
    return _trailing_ones(w) % 3


def hilbert_step(e, d, octant):
    """One level of the Gray-code Hilbert recursion.

    Returns ``(digit, e_next, d_next)`` for the current state and the octant
    ``x | y << 1 | z << 2`` of the point at this level.
    """
    t = _rotr3(octant ^ e, d + 1)
    w = _gray_inverse(t)
    e_next = e ^ _rotl3(_entry(w), d + 1)
    d_next = (d + _direction(w) + 1) % 3
    return w, e_next, d_next


def _build_hilbert_tables():
    digit = np.zeros((24, 8), dtype=np.uint64)
    nxt = np.zeros((24, 8), dtype=np.int64)
    for e in range(8):
        for d in range(3):
            s = e * 3 + d
            for octant in range(8):
                w, e2, d2 = hilbert_step(e, d, octant)
                digit[s, octant] = w
                nxt[s, octant] = e2 * 3 + d2
    return digit, nxt


HILBERT_DIGIT, HILBERT_NEXT = _build_hilbert_tables()


def theta_scale(coords, theta):
    """Apply the z bias ``(x, y, round(theta * z))``."""
    a, _ = _as_coords(coords)
    if theta == 1.0:
        return a
    out = a.copy()
    out[:, 2] = round_half_away(theta * a[:, 2].astype(np.float64))
    return out


def hilbert_codes(coords, depth, theta=1.0):
    """Vectorised Hilbert index on ``(x, y, round(theta * z))``."""
    a = theta_scale(coords, theta)
    _check_range(a, depth)
    n = a.shape[0]
    h = np.zeros(n, dtype=np.uint64)
    state = np.zeros(n, dtype=np.int64)
    for level in range(depth - 1, -1, -1):
        octant = ((a[:, 0] >> level) & 1) | (((a[:, 1] >> level) & 1) << 1) | (((a[:, 2] >> level) & 1) << 2)
        h = (h << np.uint64(3)) | HILBERT_DIGIT[state, octant]
        state = HILBERT_NEXT[state, octant]
    return h


def hilbert_encode(v, cfg: CurveConfig):
    a, single = _as_coords(v)
    codes = hilbert_codes(a, cfg.bit_depth, cfg.hilbert_theta)
    return int(codes[0]) if single else codes


def curve_depth(coords, theta=1.0):
    """Smallest depth (>= 1) that holds every (theta-scaled) coordinate."""
    a = theta_scale(coords, theta)
    if a.size == 0:
        return 1
    m = int(a.max())
    if int(a.min()) < 0:
        raise RangeError("negative coordinate")
    return max(1, m.bit_length())


def sort_by_code(coords, order=CurveOrder.MORTON, cfg: CurveConfig = None):
    """Stable permutation sorting ``coords`` by Morton or Hilbert code."""
    a, _ = _as_coords(coords)
    if order == CurveOrder.MORTON:
        codes = morton_codes(a)
    else:
        theta = cfg.hilbert_theta if cfg is not None else 1.0
        depth = cfg.bit_depth if cfg is not None else curve_depth(a, theta)
        codes = hilbert_codes(a, depth, theta)
    return np.argsort(codes, kind="stable")
