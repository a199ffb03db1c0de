"""Hierarchical pair transform for colour: layers, lossless lifting and the qp ladder."""
import numpy as np

from apcc import transform as T
from apcc.entropy import ArithmeticDecoder, ArithmeticEncoder

from _shapes import sphere

raw = sphere(20_000, 80)
v, first = np.unique(np.round(raw.points + 80).astype(np.int64), axis=0, return_index=True)
col = raw.colors[first].astype(np.int64)

# %% the merge hierarchy
h = T.build_hierarchy(v, T.TransformConfig())
print("points per layer:", h.layer_sizes()[:8], "...")

# %% two-point transform and its inverse
dc, ac = T.pair_transform(100.0, 0.0, 1, 1)
a, b = T.pair_inverse(dc, ac, 1, 1)
print(f"pair (100, 0): dc {dc:.4f} ac {ac:.4f} -> ({a:.4f}, {b:.4f})")


# %% rate against distortion
def code(qp):
    cfg = T.TransformConfig(qp=qp)
    enc = ArithmeticEncoder(T.NUM_CONTEXTS)
    rec = T.encode_attributes(h, col, cfg, enc)
    data = enc.finish()
    out = T.decode_attributes(h, 3, cfg, ArithmeticDecoder(data, T.NUM_CONTEXTS))
    assert np.array_equal(out, rec)
    return len(data), T.finalize(rec, 0, 255)


for qp in (0, 22, 28, 34, 40, 46, 51):
    n, rec = code(qp)
    mse = ((rec - col) ** 2).mean()
    psnr = float("inf") if mse == 0 else 10 * np.log10(255**2 / mse)
    print(f"qp {qp:>2}: {8 * n / len(v):6.3f} bpp, PSNR {psnr:6.2f} dB")
