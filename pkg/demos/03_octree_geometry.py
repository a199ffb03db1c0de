"""Octree occupancy coding: implicit partitions, contexts, planar and isolated modes."""
import numpy as np

from apcc import octree as O
from apcc.core import bit_depths_for
from apcc.entropy import ArithmeticDecoder, ArithmeticEncoder

from _shapes import sphere


def bits(v, cfg, depths=None):
    depths = depths or bit_depths_for(v)
    enc = ArithmeticEncoder(O.NUM_CONTEXTS)
    stats = O.encode_octree(v, depths, cfg, enc)
    return 8 * len(enc.finish()), stats


# %% a flat box gets binary and quadtree splits before full octree splits
plan = O.build_partition_plan((10, 8, 3), O.OctreeConfig())
print("split axes per level:", [lvl.split_axes for lvl in plan])

# %% context modelling on a surface
v = np.unique(np.round(sphere(200_000, 250).points + 256).astype(np.int64), axis=0)
for cs in O.ContextSet:
    b, _ = bits(v, O.OctreeConfig(context_set=cs))
    print(f"{cs.name:<6} {b / len(v):.3f} bpp")

# %% lossless: the decoder rebuilds the same voxels
enc = ArithmeticEncoder(O.NUM_CONTEXTS)
O.encode_octree(v, bit_depths_for(v), O.OctreeConfig(), enc)
dec = O.decode_octree(ArithmeticDecoder(enc.finish(), O.NUM_CONTEXTS), bit_depths_for(v), len(v), O.OctreeConfig())
print("round trip exact:", np.array_equal(np.unique(dec, axis=0), v))

# %% planar mode on a sheet
xy = np.stack(np.meshgrid(np.arange(200), np.arange(200)), -1).reshape(-1, 2)
sheet = np.c_[xy, np.full(len(xy), 21)]
off, _ = bits(sheet, O.OctreeConfig(), (8, 8, 5))
on, st = bits(sheet, O.OctreeConfig(planar_mode=True), (8, 8, 5))
print(f"planar: {off} -> {on} bits ({1 - on / off:.0%} smaller)")

# %% isolated mode on a cluster with stragglers
rng = np.random.default_rng(3)
cube = np.stack(np.meshgrid(*[np.arange(16)] * 3), -1).reshape(-1, 3) + 1000
cloud = np.r_[cube, rng.integers(0, 4096, (10, 3))]
off, _ = bits(cloud, O.OctreeConfig())
on, st = bits(cloud, O.OctreeConfig(isolated_mode=True))
print(f"isolated: {off} -> {on} bits, {st.isolated} points sent directly")
