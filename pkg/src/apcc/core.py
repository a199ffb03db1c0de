"""Point cloud data types, voxelisation, recolouring and the colour transform."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from ._rounding import round_half_away
from .curves import MAX_DEPTH, morton_codes
from .errors import EmptyInput, MissingAttributes, RangeError


@dataclass
class RawPointCloud:
    """World-space points with optional 8-bit colours and 16-bit reflectance."""

    points: np.ndarray
    colors: Optional[np.ndarray] = None
    reflectance: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")
        n = len(self.points)
        if self.colors is not None:
            self.colors = np.asarray(self.colors).reshape(-1, 3).astype(np.uint8)
            if len(self.colors) != n:
                raise ValueError("colors length differs from points")
        if self.reflectance is not None:
            self.reflectance = np.asarray(self.reflectance).reshape(-1).astype(np.uint16)
            if len(self.reflectance) != n:
                raise ValueError("reflectance length differs from points")

    def __len__(self):
        return len(self.points)

    @property
    def has_attributes(self):
        return self.colors is not None or self.reflectance is not None


def bit_depths_for(voxels):
    """Per-axis smallest ``d`` with every coordinate ``< 2**d``."""
    if len(voxels) == 0:
        return (0, 0, 0)
    m = voxels.max(axis=0)
    return tuple(int(v).bit_length() for v in m)


@dataclass
class VoxelCloud:
    """Deduplicated non-negative integer voxels plus the mapping back to world space."""

    voxels: np.ndarray
    colors: Optional[np.ndarray] = None
    reflectance: Optional[np.ndarray] = None
    origin: tuple = (0.0, 0.0, 0.0)
    scale: float = 1.0
    bit_depths: tuple = field(default=None)

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.int64).reshape(-1, 3)
        if len(self.voxels) and self.voxels.min() < 0:
            raise RangeError("voxel coordinates must be non-negative")
        depths = bit_depths_for(self.voxels)
        if self.bit_depths is None:
            self.bit_depths = depths
        else:
            self.bit_depths = tuple(int(d) for d in self.bit_depths)
            if any(d < need for d, need in zip(self.bit_depths, depths)):
                raise RangeError("bit_depths too small for the voxel coordinates")
        if max(self.bit_depths, default=0) > MAX_DEPTH:
            raise RangeError(f"coordinates exceed {MAX_DEPTH} bits per axis")
        if self.colors is not None:
            self.colors = np.asarray(self.colors).reshape(-1, 3).astype(np.uint8)
        if self.reflectance is not None:
            self.reflectance = np.asarray(self.reflectance).reshape(-1).astype(np.uint16)
        self.origin = tuple(float(o) for o in self.origin)
        self.scale = float(self.scale)

    def __len__(self):
        return len(self.voxels)

    @property
    def has_attributes(self):
        return self.colors is not None or self.reflectance is not None

    def morton_sorted(self):
        """Copy with voxels (and attributes) in ascending Morton order."""
        order = np.argsort(morton_codes(self.voxels), kind="stable")
        return self.take(order)

    def take(self, index):
        return VoxelCloud(
            self.voxels[index],
            None if self.colors is None else self.colors[index],
            None if self.reflectance is None else self.reflectance[index],
            self.origin,
            self.scale,
            self.bit_depths,
        )

    def without_attributes(self):
        return VoxelCloud(self.voxels, None, None, self.origin, self.scale, self.bit_depths)


def voxelize(cloud: RawPointCloud, scale: float) -> VoxelCloud:
    """Normalise by the per-axis minimum, scale, round and merge duplicates.

    Attributes of merged points are averaged per channel and rounded half
    away from zero.
    """
    if len(cloud) == 0:
        raise EmptyInput("cannot voxelize an empty cloud")
    if not scale > 0:
        raise RangeError("scale must be positive")
    origin = cloud.points.min(axis=0)
    v = round_half_away((cloud.points - origin) * scale)
    if v.max() >= (1 << MAX_DEPTH):
        raise RangeError(f"scaled coordinates exceed {MAX_DEPTH} bits")
    codes = morton_codes(v)
    uniq, first, inverse, counts = np.unique(codes, return_index=True, return_inverse=True, return_counts=True)
    voxels = v[first]

    def merge(values):
        if values is None:
            return None
        vals = values.reshape(len(values), -1).astype(np.float64)
        sums = np.zeros((len(uniq), vals.shape[1]))
        np.add.at(sums, inverse, vals)
        return round_half_away(sums / counts[:, None])

    colors = merge(cloud.colors)
    refl = merge(cloud.reflectance)
    return VoxelCloud(
        voxels,
        colors,
        None if refl is None else refl[:, 0],
        tuple(origin),
        scale,
    )


def devoxelize(v: VoxelCloud) -> RawPointCloud:
    points = v.voxels / v.scale + np.asarray(v.origin)
    return RawPointCloud(points, v.colors, v.reflectance)


def recolor(reconstructed: VoxelCloud, original: VoxelCloud) -> VoxelCloud:
    """Give each reconstructed voxel the attributes of its nearest original voxel.

    Distance is squared Euclidean; ties go to the candidate with the smaller
    Morton code.
    """
    if len(reconstructed) == 0 or len(original) == 0:
        raise EmptyInput("recolor needs non-empty clouds")
    if not original.has_attributes:
        raise MissingAttributes("original cloud carries no attributes")
    src = original.voxels
    tree = cKDTree(src)
    codes = morton_codes(src)
    nearest = _nearest_with_tiebreak(tree, codes, reconstructed.voxels)
    return VoxelCloud(
        reconstructed.voxels,
        None if original.colors is None else original.colors[nearest],
        None if original.reflectance is None else original.reflectance[nearest],
        reconstructed.origin,
        reconstructed.scale,
        reconstructed.bit_depths,
    )


def _nearest_with_tiebreak(tree, codes, queries):
    n_src = tree.n
    k = min(8, n_src)
    result = np.empty(len(queries), dtype=np.int64)
    todo = np.arange(len(queries))
    while len(todo):
        dist, idx = tree.query(queries[todo], k=k)
        dist = dist.reshape(len(todo), -1)
        idx = idx.reshape(len(todo), -1)
        tied = dist == dist[:, :1]
        # all k neighbours tied: more candidates may share the distance
        again = tied.all(axis=1) & (k < n_src)
        cand_codes = np.where(tied, codes[np.minimum(idx, n_src - 1)], np.iinfo(np.uint64).max)
        pick = np.argmin(cand_codes, axis=1)
        done = ~again
        result[todo[done]] = idx[done, pick[done]]
        todo = todo[again]
        k = min(2 * k, n_src)
    return result


# --- colour transform (YCoCg-R lifting) ----------------------------------------

def color_forward(rgb):
    """Integer-reversible RGB -> (Y, Co, Cg). Accepts ``(3,)`` or ``(n, 3)``."""
    a = np.asarray(rgb, dtype=np.int64)
    r, g, b = a[..., 0], a[..., 1], a[..., 2]
    co = r - b
    t = b + (co >> 1)
    cg = g - t
    y = t + (cg >> 1)
    return np.stack([y, co, cg], axis=-1)


def color_inverse(ycc):
    a = np.asarray(ycc, dtype=np.int64)
    y, co, cg = a[..., 0], a[..., 1], a[..., 2]
    t = y - (cg >> 1)
    g = cg + t
    b = t - (co >> 1)
    r = b + co
    return np.stack([r, g, b], axis=-1)
