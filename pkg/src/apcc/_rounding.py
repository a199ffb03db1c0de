import numpy as np


def round_half_away(x):
    """Round to nearest integer, ties away from zero. Returns int64 (array or scalar)."""
    a = np.asarray(x, dtype=np.float64)
    r = np.sign(a) * np.floor(np.abs(a) + 0.5)
    if r.ndim == 0:
        return int(r)
    return r.astype(np.int64)
