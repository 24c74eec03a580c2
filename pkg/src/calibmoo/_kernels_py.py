"""NumPy/SciPy versions of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built, or when ``CALIBMOO_PURE_PYTHON=1``.
Arithmetic is written in the same order as the compiled loops so both paths
return identical floats.
"""

import numpy as np
from scipy.spatial import cKDTree


class KDTree2D:
    """Nearest squared-distance queries backed by ``scipy.spatial.cKDTree``."""

    def __init__(self, points):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"expected an (M, 2) array, got shape {pts.shape}")
        self._pts = pts
        self.size = pts.shape[0]
        self._tree = cKDTree(pts) if self.size else None

    def query_sq(self, queries):
        q = np.ascontiguousarray(queries, dtype=np.float64)
        if q.ndim != 2 or q.shape[1] != 2:
            raise ValueError(f"expected an (N, 2) array, got shape {q.shape}")
        if q.shape[0] == 0 or self._tree is None:
            return np.full(q.shape[0], np.inf)
        _, idx = self._tree.query(q)
        # recompute from the winning index: cKDTree reports sqrt'd distances
        nearest = self._pts[idx]
        dx = q[:, 0] - nearest[:, 0]
        dy = q[:, 1] - nearest[:, 1]
        return dx * dx + dy * dy


def nearest_sq_dists(reference, queries):
    return KDTree2D(reference).query_sq(queries)


def project_points(points, rotation, translation, fx, fy, u0, v0, width, height, min_depth):
    p = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    r = np.asarray(rotation, dtype=np.float64)
    t = np.asarray(translation, dtype=np.float64)
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    xc = r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0]
    yc = r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1]
    zc = r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2]
    front = zc > min_depth
    idx = np.flatnonzero(front)
    xc, yc, zc = xc[idx], yc[idx], zc[idx]
    u = fx * (xc / zc) + u0
    v = fy * (yc / zc) + v0
    inside = (u >= 0.0) & (u < width) & (v >= 0.0) & (v < height)
    uv = np.column_stack((u[inside], v[inside]))
    return uv, zc[inside], idx[inside]


def depth_gap_mask(depth, gap, foreground_only=False):
    d = np.asarray(depth, dtype=np.float64)
    mask = np.zeros(d.shape[0], dtype=bool)
    if d.shape[0] < 2:
        return mask
    step = d[1:] - d[:-1]
    jump = np.abs(step) > gap
    if foreground_only:
        mask[:-1] |= jump & (step > 0)
        mask[1:] |= jump & (step < 0)
    else:
        mask[1:] |= jump
        mask[:-1] |= jump
    return mask


def pareto_ranks(objectives):
    f = np.asarray(objectives, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("objectives must be a 2-D array")
    n = f.shape[0]
    ranks = np.full(n, -1, dtype=np.intp)
    if n == 0:
        return ranks
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    current = np.flatnonzero(count == 0)
    front = 0
    while current.size:
        ranks[current] = front
        count = count - dom[current].sum(axis=0)
        count[ranks >= 0] = -1
        current = np.flatnonzero(count == 0)
        front += 1
    return ranks
