"""The adaptive binary range coder against the entropy of its input."""
import math

import numpy as np

from apcc.entropy import ArithmeticDecoder, ArithmeticEncoder

rng = np.random.default_rng(1)

# %% a skewed binary source
for p in (0.5, 0.2, 0.05, 0.01):
    bits = (rng.random(100_000) < p).astype(int)
    enc = ArithmeticEncoder(1)
    for b in bits:
        enc.encode_bin(0, int(b))
    data = enc.finish()
    q = bits.mean()
    h = -(q * math.log2(q) + (1 - q) * math.log2(1 - q))
    print(f"p={p:<5} entropy {h:.4f} bit/bin, coded {8 * len(data) / len(bits):.4f} bit/bin")

# %% contexts keep separate statistics, bypass bins cost one bit
enc = ArithmeticEncoder(2)
pattern = [(0, 0), (1, 1)] * 5000
for ctx, bit in pattern:
    enc.encode_bin(ctx, bit)
print("two predictable contexts:", len(enc.finish()), "bytes for", len(pattern), "bins")

# %% signed integers: Exp-Golomb prefix in contexts, suffix bypassed
vals = np.round(rng.laplace(0, 3, 5000)).astype(np.int64)
enc = ArithmeticEncoder(10)
enc.encode_sint_batch(vals, np.zeros(len(vals), np.int64), np.full(len(vals), 8))
data = enc.finish()
out = ArithmeticDecoder(data, 10).decode_sint_batch(len(vals), np.zeros(len(vals), np.int64), np.full(len(vals), 8))
print("laplace residuals:", 8 * len(data) / len(vals), "bits each, exact:", np.array_equal(out, vals))
