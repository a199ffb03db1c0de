"""Nearest-neighbour chain for low-latency geometry coding."""
import numpy as np

from apcc import predtree as T
from apcc.core import bit_depths_for
from apcc.curves import morton_codes
from apcc.entropy import ArithmeticDecoder, ArithmeticEncoder

from _shapes import sphere

v = np.unique(np.round(sphere(30_000, 120).points + 128).astype(np.int64), axis=0)

# %% the chain hops to the nearest remaining point each time
chain = T.build_chain(v)
hop = np.abs(chain.residuals()).sum(axis=1)
morton = v[np.argsort(morton_codes(v))]
print(f"mean hop: chain {hop.mean():.2f}, morton order {np.abs(np.diff(morton, axis=0)).sum(axis=1).mean():.2f}")

# %% residuals are small, so they code cheaply
depths = bit_depths_for(v)
enc = ArithmeticEncoder(T.NUM_CONTEXTS)
T.encode_chain(chain, depths, enc)
data = enc.finish()
print(f"{8 * len(data) / len(v):.2f} bpp for {len(v)} points")
back = T.decode_chain(ArithmeticDecoder(data, T.NUM_CONTEXTS), depths, len(v))
print("decoded in chain order:", np.array_equal(back, chain.voxels))
