"""Level-of-detail prediction with two Morton orders and a bounded reference set."""
import numpy as np

from apcc import predict as P
from apcc.entropy import ArithmeticEncoder

from _shapes import sphere

raw = sphere(20_000, 80)
v, first = np.unique(np.round(raw.points + 80).astype(np.int64), axis=0, return_index=True)
col = raw.colors[first].astype(np.int64)
lo, hi, mids = [0] * 3, [255] * 3, [128] * 3

# %% levels of detail
cfg = P.PredictConfig(lod_levels_n=4)
plan = P.plan_prediction(v, cfg)
print("chosen K:", plan.lod_shift_k, "points per level:", np.bincount(plan.level)[1:].tolist())

# %% the predictor is a distance-weighted mean of up to three neighbours
print("d=0 value 10 and d=4 value 250 ->", P.predict_point([0, 4], [[10], [250]], 128))

# %% what the cache size buys
for m in (4, 16, 128):
    c = P.PredictConfig(cache_size_m=m)
    enc = ArithmeticEncoder(P.NUM_CONTEXTS)
    P.encode_attributes(v, col, P.plan_prediction(v, c), c, enc, lo, hi, mids)
    print(f"M={m:<4} lossless colour {8 * len(enc.finish()) / len(v):.3f} bpp")
