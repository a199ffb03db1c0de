"""Small synthetic clouds for the demos."""
import numpy as np

from apcc.core import RawPointCloud


def sphere(n=40_000, radius=60.0, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = radius * u
    col = np.clip(128 + 100 * np.sin(pts / 15.0), 0, 255).astype(np.uint8)
    refl = np.clip(20000 + 150 * pts[:, 2], 0, 65535).astype(np.uint16)
    return RawPointCloud(pts, col, refl)
