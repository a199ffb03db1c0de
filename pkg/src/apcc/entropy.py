"""Context-adaptive binary range coder.

The coder core is a carry-propagating range coder with 32-bit ``low`` and
``range`` registers and byte-wise renormalisation (cache byte + pending
counter).  Each context holds a 16-bit fixed-point probability of a zero
bin, updated by ``p += (target - p) >> adapt_rate`` and saturated to
``[1, 2**16 - 1]``.

All hot paths are ``numba`` kernels operating on three arrays:

* ``st``    -- int64 register file (see the ``_E_*`` / ``_D_*`` slots)
* ``buf``   -- uint8 output (encoder) or input (decoder) bytes
* ``probs`` -- int64 probability of zero per context

The geometry and attribute coders call the kernels directly from their own
jitted loops; :class:`ArithmeticEncoder` / :class:`ArithmeticDecoder` wrap
them for use from Python.
"""
import numpy as np
from numba import njit

from .errors import BitstreamUnderrun, ContextIndexError, CorruptStream, RangeError

PROB_BITS = 16
PROB_ONE = 1 << PROB_BITS
PROB_HALF = PROB_ONE >> 1
PROB_MIN = 1
PROB_MAX = PROB_ONE - 1
ADAPT_RATE = 5
UINT_PREFIX_CONTEXTS = 8

_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF

# encoder register slots
_E_LOW, _E_RANGE, _E_CACHE, _E_PENDING, _E_POS, _E_RATE = 0, 1, 2, 3, 4, 5
# decoder register slots
_D_CODE, _D_RANGE, _D_POS, _D_END, _D_UNDERRUN, _D_RATE, _D_CORRUPT = 0, 1, 2, 3, 4, 5, 6

# worst-case encoder output per coded bin (three renormalisation bytes)
BYTES_PER_BIN = 3


def new_probs(num_contexts):
    return np.full(num_contexts, PROB_HALF, dtype=np.int64)


def new_encoder_state(adapt_rate=ADAPT_RATE):
    st = np.zeros(8, dtype=np.int64)
    st[_E_RANGE] = _MASK32
    st[_E_PENDING] = 1
    st[_E_RATE] = adapt_rate
    return st


@njit(cache=True)
def _shift_low(st, buf):
    low = st[_E_LOW]
    if (low & _MASK32) < 0xFF000000 or (low >> 32) != 0:
        carry = low >> 32
        temp = st[_E_CACHE]
        pos = st[_E_POS]
        while True:
            # past the end: count but do not write; the wrapper reports overflow
            if pos < buf.shape[0]:
                buf[pos] = (temp + carry) & 0xFF
            pos += 1
            temp = 0xFF
            st[_E_PENDING] -= 1
            if st[_E_PENDING] == 0:
                break
        st[_E_POS] = pos
        st[_E_CACHE] = (low >> 24) & 0xFF
    st[_E_PENDING] += 1
    st[_E_LOW] = (low & 0x00FFFFFF) << 8


@njit(cache=True)
def _adapt(probs, ctx, bit, rate):
    p = probs[ctx]
    if bit:
        p += (0 - p) >> rate
    else:
        p += (PROB_ONE - p) >> rate
    if p < PROB_MIN:
        p = PROB_MIN
    elif p > PROB_MAX:
        p = PROB_MAX
    probs[ctx] = p


@njit(cache=True)
def enc_bin(st, buf, probs, ctx, bit):
    rng = st[_E_RANGE]
    bound = (rng >> PROB_BITS) * probs[ctx]
    if bit:
        st[_E_LOW] += bound
        rng -= bound
    else:
        rng = bound
    _adapt(probs, ctx, bit, st[_E_RATE])
    while rng < _TOP:
        rng = (rng << 8) & _MASK32
        _shift_low(st, buf)
    st[_E_RANGE] = rng


@njit(cache=True)
def enc_bypass(st, buf, bit):
    rng = st[_E_RANGE] >> 1
    if bit:
        st[_E_LOW] += rng
    while rng < _TOP:
        rng = (rng << 8) & _MASK32
        _shift_low(st, buf)
    st[_E_RANGE] = rng


@njit(cache=True)
def enc_bits(st, buf, value, nbits):
    for i in range(nbits - 1, -1, -1):
        enc_bypass(st, buf, (value >> i) & 1)


@njit(cache=True)
def enc_uint(st, buf, probs, value, ctx_base):
    """Exp-Golomb order 0: unary prefix of context-coded bins, bypass suffix."""
    v1 = value + 1
    n = 0
    while (v1 >> (n + 1)) != 0:
        n += 1
    for i in range(n):
        enc_bin(st, buf, probs, ctx_base + min(i, UINT_PREFIX_CONTEXTS - 1), 1)
    enc_bin(st, buf, probs, ctx_base + min(n, UINT_PREFIX_CONTEXTS - 1), 0)
    enc_bits(st, buf, v1, n)


@njit(cache=True)
def enc_sint(st, buf, probs, value, ctx_base, sign_ctx):
    """Magnitude via :func:`enc_uint` then a sign bin when non-zero."""
    mag = value if value >= 0 else -value
    enc_uint(st, buf, probs, mag, ctx_base)
    if mag != 0:
        enc_bin(st, buf, probs, sign_ctx, 1 if value < 0 else 0)


@njit(cache=True)
def enc_flush(st, buf):
    for _ in range(5):
        _shift_low(st, buf)


def new_decoder_state(data, adapt_rate=ADAPT_RATE):
    # writable copy so shared encode/decode kernels type-check identically
    buf = np.array(np.frombuffer(bytes(data), dtype=np.uint8))
    st = np.zeros(8, dtype=np.int64)
    st[_D_RANGE] = _MASK32
    st[_D_END] = buf.shape[0]
    st[_D_RATE] = adapt_rate
    _dec_init(st, buf)
    return st, buf


@njit(cache=True)
def _next_byte(st, buf):
    pos = st[_D_POS]
    if pos >= st[_D_END]:
        st[_D_UNDERRUN] = 1
        return 0
    st[_D_POS] = pos + 1
    return buf[pos]


@njit(cache=True)
def _dec_init(st, buf):
    code = 0
    for _ in range(5):
        code = ((code << 8) | _next_byte(st, buf)) & _MASK32
    st[_D_CODE] = code


@njit(cache=True)
def dec_bin(st, buf, probs, ctx):
    rng = st[_D_RANGE]
    code = st[_D_CODE]
    bound = (rng >> PROB_BITS) * probs[ctx]
    if code < bound:
        rng = bound
        bit = 0
    else:
        code -= bound
        rng -= bound
        bit = 1
    _adapt(probs, ctx, bit, st[_D_RATE])
    while rng < _TOP:
        rng = (rng << 8) & _MASK32
        code = ((code << 8) | _next_byte(st, buf)) & _MASK32
    st[_D_RANGE] = rng
    st[_D_CODE] = code
    return bit


@njit(cache=True)
def dec_bypass(st, buf):
    rng = st[_D_RANGE] >> 1
    code = st[_D_CODE]
    bit = 0
    if code >= rng:
        code -= rng
        bit = 1
    while rng < _TOP:
        rng = (rng << 8) & _MASK32
        code = ((code << 8) | _next_byte(st, buf)) & _MASK32
    st[_D_RANGE] = rng
    st[_D_CODE] = code
    return bit


@njit(cache=True)
def dec_bits(st, buf, nbits):
    v = 0
    for _ in range(nbits):
        v = (v << 1) | dec_bypass(st, buf)
    return v


@njit(cache=True)
def dec_uint(st, buf, probs, ctx_base):
    """Inverse of :func:`enc_uint`; an over-long prefix sets the corrupt flag."""
    n = 0
    while dec_bin(st, buf, probs, ctx_base + min(n, UINT_PREFIX_CONTEXTS - 1)) == 1:
        n += 1
        if n > 32:
            st[_D_CORRUPT] = 1
            return 0
        if st[_D_UNDERRUN]:
            return 0
    return ((1 << n) | dec_bits(st, buf, n)) - 1


@njit(cache=True)
def dec_sint(st, buf, probs, ctx_base, sign_ctx):
    mag = dec_uint(st, buf, probs, ctx_base)
    if mag != 0 and dec_bin(st, buf, probs, sign_ctx) == 1:
        return -mag
    return mag


@njit(cache=True)
def enc_sint_batch(st, buf, probs, values, ctx_bases, sign_ctxs):
    for i in range(values.shape[0]):
        enc_sint(st, buf, probs, values[i], ctx_bases[i], sign_ctxs[i])


@njit(cache=True)
def dec_sint_batch(st, buf, probs, ctx_bases, sign_ctxs, out):
    for i in range(out.shape[0]):
        out[i] = dec_sint(st, buf, probs, ctx_bases[i], sign_ctxs[i])
        if st[_D_UNDERRUN] or st[_D_CORRUPT]:
            return


def check_decoder(st, what="stream"):
    """Raise the typed error matching a decoder's sticky flags."""
    if st[_D_UNDERRUN]:
        raise BitstreamUnderrun(f"{what} ended before decoding finished")
    if st[_D_CORRUPT]:
        raise CorruptStream(f"{what}: exp-Golomb prefix longer than 32 bins")


class ArithmeticEncoder:
    """Python-facing encoder over a bank of ``num_contexts`` adaptive contexts."""

    def __init__(self, num_contexts, adapt_rate=ADAPT_RATE, capacity=1024):
        self.num_contexts = num_contexts
        self.probs = new_probs(num_contexts)
        self.st = new_encoder_state(adapt_rate)
        self.buf = np.zeros(max(capacity, 64), dtype=np.uint8)
        self._finished = None
        self._lost = False

    @property
    def pos(self):
        return int(self.st[_E_POS])

    def reserve(self, nbytes):
        """Make room for ``nbytes`` more output bytes (for jitted batch calls)."""
        if self.overflowed:
            self._lost = True
            return
        need = int(self.st[_E_POS]) + int(self.st[_E_PENDING]) + nbytes + 16
        if need > self.buf.shape[0]:
            new = np.zeros(max(need, 2 * self.buf.shape[0]), dtype=np.uint8)
            new[: self.buf.shape[0]] = self.buf
            self.buf = new

    @property
    def overflowed(self):
        """True once a kernel produced more bytes than the buffer held."""
        return self._lost or int(self.st[_E_POS]) > self.buf.shape[0]

    def _ctx(self, ctx):
        if not 0 <= ctx < self.num_contexts:
            raise ContextIndexError(f"context {ctx} outside [0, {self.num_contexts})")
        return ctx

    def encode_bin(self, ctx, bit):
        self.reserve(BYTES_PER_BIN)
        enc_bin(self.st, self.buf, self.probs, self._ctx(ctx), 1 if bit else 0)

    def encode_bypass(self, bit):
        self.reserve(1)
        enc_bypass(self.st, self.buf, 1 if bit else 0)

    def encode_bits(self, value, nbits):
        self.reserve(nbits // 8 + 2)
        enc_bits(self.st, self.buf, int(value), int(nbits))

    def encode_uint(self, value, ctx_base):
        value = int(value)
        if not 0 <= value < (1 << 32):
            raise RangeError("encode_uint value must be in [0, 2^32)")
        self._ctx(ctx_base + UINT_PREFIX_CONTEXTS - 1)
        self.reserve(BYTES_PER_BIN * 33 + 8)
        enc_uint(self.st, self.buf, self.probs, value, self._ctx(ctx_base))

    def encode_sint(self, value, ctx_base, sign_ctx):
        value = int(value)
        if not -(1 << 32) < value < (1 << 32):
            raise RangeError("encode_sint magnitude must be below 2^32")
        self._ctx(ctx_base + UINT_PREFIX_CONTEXTS - 1)
        self.reserve(BYTES_PER_BIN * 34 + 8)
        enc_sint(self.st, self.buf, self.probs, value, self._ctx(ctx_base), self._ctx(sign_ctx))

    def encode_sint_batch(self, values, ctx_bases, sign_ctxs):
        values = np.ascontiguousarray(values, dtype=np.int64)
        ctx_bases = np.ascontiguousarray(np.broadcast_to(ctx_bases, values.shape), dtype=np.int64)
        sign_ctxs = np.ascontiguousarray(np.broadcast_to(sign_ctxs, values.shape), dtype=np.int64)
        if values.size:
            if np.abs(values).max() >= (1 << 32):
                raise RangeError("encode_sint magnitude must be below 2^32")
            if ctx_bases.min() < 0 or ctx_bases.max() + UINT_PREFIX_CONTEXTS > self.num_contexts:
                raise ContextIndexError("uint context base out of range")
            if sign_ctxs.min() < 0 or sign_ctxs.max() >= self.num_contexts:
                raise ContextIndexError("sign context out of range")
        self.reserve(values.size * (BYTES_PER_BIN * 34 + 8))
        enc_sint_batch(self.st, self.buf, self.probs, values, ctx_bases, sign_ctxs)

    def finish(self):
        """Flush and return the payload. Idempotent."""
        if self._finished is None:
            self.reserve(8)
            enc_flush(self.st, self.buf)
            if self.overflowed:
                raise BufferError(f"encoder output reached {self.pos} bytes; buffer held {self.buf.shape[0]}")
            self._finished = bytes(self.buf[: self.st[_E_POS]])
        return self._finished


class ArithmeticDecoder:
    def __init__(self, data, num_contexts, adapt_rate=ADAPT_RATE):
        self.num_contexts = num_contexts
        self.probs = new_probs(num_contexts)
        self.st, self.buf = new_decoder_state(data, adapt_rate)
        self.check()

    def check(self):
        check_decoder(self.st)

    def _ctx(self, ctx):
        if not 0 <= ctx < self.num_contexts:
            raise ContextIndexError(f"context {ctx} outside [0, {self.num_contexts})")
        return ctx

    def decode_bin(self, ctx):
        bit = dec_bin(self.st, self.buf, self.probs, self._ctx(ctx))
        self.check()
        return bit

    def decode_bypass(self):
        bit = dec_bypass(self.st, self.buf)
        self.check()
        return bit

    def decode_bits(self, nbits):
        v = dec_bits(self.st, self.buf, int(nbits))
        self.check()
        return int(v)

    def decode_uint(self, ctx_base):
        self._ctx(ctx_base + UINT_PREFIX_CONTEXTS - 1)
        v = dec_uint(self.st, self.buf, self.probs, self._ctx(ctx_base))
        self.check()
        return int(v)

    def decode_sint(self, ctx_base, sign_ctx):
        self._ctx(ctx_base + UINT_PREFIX_CONTEXTS - 1)
        self._ctx(sign_ctx)
        mag = self.decode_uint(ctx_base)
        if mag and self.decode_bin(sign_ctx):
            return -mag
        return mag

    def decode_sint_batch(self, count, ctx_bases, sign_ctxs):
        out = np.zeros(count, dtype=np.int64)
        ctx_bases = np.ascontiguousarray(np.broadcast_to(ctx_bases, (count,)), dtype=np.int64)
        sign_ctxs = np.ascontiguousarray(np.broadcast_to(sign_ctxs, (count,)), dtype=np.int64)
        if count:
            if ctx_bases.min() < 0 or ctx_bases.max() + UINT_PREFIX_CONTEXTS > self.num_contexts:
                raise ContextIndexError("uint context base out of range")
            if sign_ctxs.min() < 0 or sign_ctxs.max() >= self.num_contexts:
                raise ContextIndexError("sign context out of range")
        dec_sint_batch(self.st, self.buf, self.probs, ctx_bases, sign_ctxs, out)
        self.check()
        return out

    @property
    def bytes_consumed(self):
        return int(self.st[_D_POS])
