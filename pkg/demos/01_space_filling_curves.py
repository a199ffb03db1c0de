"""Morton and Hilbert orders, and why a second, shifted Morton order helps."""
import numpy as np

from apcc.curves import CurveConfig, hilbert_encode, morton_decode, morton_encode, sort_by_code, CurveOrder

# %% Morton codes interleave bits, x lowest
for p in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (3, 3, 3), (4, 4, 4)]:
    c = morton_encode(p)
    print(p, "->", c, "->", morton_decode(c))

# %% (3,3,3) and (4,4,4) touch diagonally, but their codes sit far apart:
# the step crosses the top-level octant boundary.
print("plain gap:", morton_encode((4, 4, 4)) - morton_encode((3, 3, 3)))
print("after +1 shift:", morton_encode((5, 5, 5)) - morton_encode((4, 4, 4)))

# %% the Hilbert curve never jumps: consecutive codes are unit steps
grid = np.array([(x, y, z) for x in range(4) for y in range(4) for z in range(4)])
walk = grid[sort_by_code(grid, CurveOrder.HILBERT, CurveConfig(bit_depth=2))]
steps = np.abs(np.diff(walk, axis=0)).sum(axis=1)
print("hilbert step lengths:", set(steps.tolist()))
walk = grid[sort_by_code(grid, CurveOrder.MORTON)]
print("morton step lengths:", sorted(set(np.abs(np.diff(walk, axis=0)).sum(axis=1).tolist())))

# %% theta stretches z before the Hilbert walk, favouring xy neighbours
cfg = CurveConfig(bit_depth=4, hilbert_theta=2.0)
print("theta=2 code of (1,1,1):", hilbert_encode((1, 1, 1), cfg))
