"""Geometry and attribute distortion metrics."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import RawPointCloud, VoxelCloud
from .errors import EmptyInput

LUMA_709 = np.array([0.2126, 0.7152, 0.0722])


@dataclass
class Metrics:
    d1_mse: float
    d1_psnr: float
    hausdorff: float
    peak: float
    attr_psnr: dict = field(default_factory=dict)  # channel name -> PSNR

    @property
    def y_psnr(self):
        return self.attr_psnr.get("y", math.nan)


def _points(c):
    if isinstance(c, VoxelCloud):
        return c.voxels.astype(np.float64)
    if isinstance(c, RawPointCloud):
        return c.points
    return np.asarray(c, dtype=np.float64).reshape(-1, 3)


def psnr(peak, mse):
    return math.inf if mse == 0 else 10.0 * math.log10(peak * peak / mse)


def format_db(x, digits=4):
    """Fixed-precision rendering; infinity prints as ``inf``."""
    if math.isinf(x):
        return "inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.{digits}f}"


def _nn(src, dst):
    """Index into ``dst`` of each ``src`` point's nearest neighbour, and squared distance."""
    d, i = cKDTree(dst).query(src, k=1)
    return i, d * d


def compute_metrics(reference, distorted) -> Metrics:
    """D1 (point-to-point) PSNR, Hausdorff distance and attribute PSNR.

    The D1 error is the mean of the two directional mean squared
    nearest-neighbour distances, with peak equal to the largest bounding-box
    side of the reference.  Attributes are compared through the same
    nearest-neighbour correspondence in both directions.
    """
    a, b = _points(reference), _points(distorted)
    if len(a) == 0 or len(b) == 0:
        raise EmptyInput("metrics need non-empty clouds")
    ia, da = _nn(a, b)
    ib, db = _nn(b, a)
    mse = 0.5 * (da.mean() + db.mean())
    peak = float(max(1.0, (a.max(axis=0) - a.min(axis=0)).max()))
    m = Metrics(float(mse), psnr(peak, mse), float(math.sqrt(max(da.max(), db.max()))), peak)

    ca, cb = getattr(reference, "colors", None), getattr(distorted, "colors", None)
    if ca is not None and cb is not None:
        ca, cb = ca.astype(np.float64), cb.astype(np.float64)

        def sym(x, y):
            return 0.5 * (((x - y[ia]) ** 2).mean(axis=0) + ((y - x[ib]) ** 2).mean(axis=0))

        per = sym(ca, cb)
        for name, v in zip("rgb", per):
            m.attr_psnr[name] = psnr(255.0, float(v))
        m.attr_psnr["y"] = psnr(255.0, float(sym(ca @ LUMA_709, cb @ LUMA_709)))
    ra, rb = getattr(reference, "reflectance", None), getattr(distorted, "reflectance", None)
    if ra is not None and rb is not None:
        ra, rb = ra.astype(np.float64), rb.astype(np.float64)
        v = 0.5 * (((ra - rb[ia]) ** 2).mean() + ((rb - ra[ib]) ** 2).mean())
        m.attr_psnr["reflectance"] = psnr(65535.0, float(v))
    return m
