# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: 2-D k-d tree, projection, depth-gap flags, dominance ranks.

Every routine mirrors one in ``_kernels_py`` and produces the same values bit
for bit (the build disables FMA contraction so arithmetic order is preserved).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    LEAF_SIZE = 8
    STACK_SIZE = 256


cdef inline void _swap(cnp.intp_t* a, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef cnp.intp_t t = a[i]
    a[i] = a[j]
    a[j] = t


cdef void _select(const double* pts, cnp.intp_t* perm, Py_ssize_t lo, Py_ssize_t hi,
                  Py_ssize_t k, int dim) noexcept nogil:
    # nth_element on perm[lo:hi] so perm[k] holds the k-th smallest coordinate
    cdef Py_ssize_t i, j, mid
    cdef double pivot
    hi -= 1
    while hi > lo:
        mid = lo + (hi - lo) // 2
        # median of three into perm[mid]
        if pts[2 * perm[mid] + dim] < pts[2 * perm[lo] + dim]:
            _swap(perm, mid, lo)
        if pts[2 * perm[hi] + dim] < pts[2 * perm[lo] + dim]:
            _swap(perm, hi, lo)
        if pts[2 * perm[hi] + dim] < pts[2 * perm[mid] + dim]:
            _swap(perm, hi, mid)
        pivot = pts[2 * perm[mid] + dim]
        i = lo
        j = hi
        while i <= j:
            while pts[2 * perm[i] + dim] < pivot:
                i += 1
            while pts[2 * perm[j] + dim] > pivot:
                j -= 1
            if i <= j:
                _swap(perm, i, j)
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            return


cdef class KDTree2D:
    """Static 2-D k-d tree answering exact nearest squared-distance queries."""

    cdef double[::1] xs
    cdef double[::1] ys
    cdef cnp.intp_t[::1] start
    cdef cnp.intp_t[::1] stop
    cdef cnp.intp_t[::1] left
    cdef cnp.intp_t[::1] right
    cdef cnp.int8_t[::1] dim
    cdef double[::1] split
    cdef Py_ssize_t n_nodes
    cdef readonly Py_ssize_t size

    def __init__(self, points):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"expected an (M, 2) array, got shape {pts.shape}")
        self.size = pts.shape[0]
        cdef Py_ssize_t m = self.size
        cdef Py_ssize_t cap = m + 8
        perm = np.arange(m, dtype=np.intp)
        self.start = np.zeros(cap, dtype=np.intp)
        self.stop = np.zeros(cap, dtype=np.intp)
        self.left = np.full(cap, -1, dtype=np.intp)
        self.right = np.full(cap, -1, dtype=np.intp)
        self.dim = np.zeros(cap, dtype=np.int8)
        self.split = np.zeros(cap, dtype=np.float64)
        cdef const double[:, ::1] pv = pts
        cdef cnp.intp_t[::1] pm = perm
        self.n_nodes = 0
        if m > 0:
            self._build(&pv[0, 0], &pm[0], m)
        self.xs = np.ascontiguousarray(pts[perm, 0])
        self.ys = np.ascontiguousarray(pts[perm, 1])

    cdef void _build(self, const double* pts, cnp.intp_t* perm, Py_ssize_t m) noexcept:
        cdef cnp.intp_t stack_node[STACK_SIZE]
        cdef Py_ssize_t top = 0
        cdef Py_ssize_t node, s, e, i, mid
        cdef double minx, maxx, miny, maxy, x, y
        cdef int d
        self.start[0] = 0
        self.stop[0] = m
        self.n_nodes = 1
        stack_node[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack_node[top]
            s = self.start[node]
            e = self.stop[node]
            if e - s <= LEAF_SIZE:
                continue
            minx = INFINITY
            maxx = -INFINITY
            miny = INFINITY
            maxy = -INFINITY
            for i in range(s, e):
                x = pts[2 * perm[i]]
                y = pts[2 * perm[i] + 1]
                if x < minx:
                    minx = x
                if x > maxx:
                    maxx = x
                if y < miny:
                    miny = y
                if y > maxy:
                    maxy = y
            d = 0 if (maxx - minx) >= (maxy - miny) else 1
            mid = s + (e - s) // 2
            _select(pts, perm, s, e, mid, d)
            self.dim[node] = d
            self.split[node] = pts[2 * perm[mid] + d]
            self.left[node] = self.n_nodes
            self.start[self.n_nodes] = s
            self.stop[self.n_nodes] = mid
            self.right[node] = self.n_nodes + 1
            self.start[self.n_nodes + 1] = mid
            self.stop[self.n_nodes + 1] = e
            stack_node[top] = self.n_nodes
            stack_node[top + 1] = self.n_nodes + 1
            top += 2
            self.n_nodes += 2

    cdef double _nearest(self, double qx, double qy) noexcept nogil:
        cdef cnp.intp_t stack_node[STACK_SIZE]
        cdef double stack_bound[STACK_SIZE]
        cdef Py_ssize_t top = 1
        cdef Py_ssize_t node, i, near, far
        cdef double best = INFINITY
        cdef double dx, dy, d2, diff, bound
        stack_node[0] = 0
        stack_bound[0] = 0.0
        while top > 0:
            top -= 1
            node = stack_node[top]
            bound = stack_bound[top]
            if bound >= best:
                continue
            while self.left[node] >= 0:
                if self.dim[node] == 0:
                    diff = qx - self.split[node]
                else:
                    diff = qy - self.split[node]
                if diff < 0:
                    near = self.left[node]
                    far = self.right[node]
                else:
                    near = self.right[node]
                    far = self.left[node]
                stack_node[top] = far
                stack_bound[top] = diff * diff
                top += 1
                node = near
            for i in range(self.start[node], self.stop[node]):
                dx = qx - self.xs[i]
                dy = qy - self.ys[i]
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
        return best

    def query_sq(self, queries):
        """Squared distance from each query row to its nearest tree point."""
        q = np.ascontiguousarray(queries, dtype=np.float64)
        if q.ndim != 2 or q.shape[1] != 2:
            raise ValueError(f"expected an (N, 2) array, got shape {q.shape}")
        cdef Py_ssize_t n = q.shape[0]
        out = np.full(n, np.inf, dtype=np.float64)
        if n == 0 or self.size == 0:
            return out
        cdef const double[:, ::1] qv = q
        cdef double[::1] ov = out
        cdef Py_ssize_t i
        with nogil:
            for i in range(n):
                ov[i] = self._nearest(qv[i, 0], qv[i, 1])
        return out


def nearest_sq_dists(reference, queries):
    return KDTree2D(reference).query_sq(queries)


def project_points(points, rotation, translation, double fx, double fy, double u0,
                   double v0, double width, double height, double min_depth):
    """Transform, depth-filter and bounds-filter points; returns (uv, depth, index)."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    rot = np.ascontiguousarray(rotation, dtype=np.float64)
    tr = np.ascontiguousarray(translation, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    uv = np.empty((n, 2), dtype=np.float64)
    depth = np.empty(n, dtype=np.float64)
    index = np.empty(n, dtype=np.intp)
    if n == 0:
        return uv, depth, index
    cdef const double[:, ::1] p = pts
    cdef const double[:, ::1] r = rot
    cdef const double[::1] t = tr
    cdef double[:, ::1] uvv = uv
    cdef double[::1] dv = depth
    cdef cnp.intp_t[::1] iv = index
    cdef Py_ssize_t i, k = 0
    cdef double x, y, z, xc, yc, zc, u, v
    with nogil:
        for i in range(n):
            x = p[i, 0]
            y = p[i, 1]
            z = p[i, 2]
            xc = r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0]
            yc = r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1]
            zc = r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2]
            if zc <= min_depth:
                continue
            u = fx * (xc / zc) + u0
            v = fy * (yc / zc) + v0
            if u < 0.0 or u >= width or v < 0.0 or v >= height:
                continue
            uvv[k, 0] = u
            uvv[k, 1] = v
            dv[k] = zc
            iv[k] = i
            k += 1
    return uv[:k], depth[:k], index[:k]


def depth_gap_mask(depth, double gap, bint foreground_only=False):
    """Flag points flanking each consecutive depth jump larger than ``gap``.

    Both flanking points are flagged unless ``foreground_only``, in which case
    only the nearer one is.
    """
    d = np.ascontiguousarray(depth, dtype=np.float64)
    cdef Py_ssize_t n = d.shape[0]
    mask = np.zeros(n, dtype=np.bool_)
    if n < 2:
        return mask
    cdef const double[::1] dv = d
    cdef cnp.npy_bool[::1] mv = mask
    cdef Py_ssize_t i
    cdef double step
    with nogil:
        for i in range(1, n):
            step = dv[i] - dv[i - 1]
            if fabs(step) > gap:
                if not foreground_only:
                    mv[i] = 1
                    mv[i - 1] = 1
                elif step > 0:
                    mv[i - 1] = 1
                else:
                    mv[i] = 1
    return mask


def pareto_ranks(objectives):
    """Front index of each row under minimisation (fast non-dominated sort)."""
    f = np.ascontiguousarray(objectives, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("objectives must be a 2-D array")
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t m = f.shape[1]
    ranks = np.full(n, -1, dtype=np.intp)
    if n == 0:
        return ranks
    cdef const double[:, ::1] fv = f
    cdef cnp.intp_t[::1] rv = ranks
    cdef cnp.intp_t* count = <cnp.intp_t*> malloc(n * sizeof(cnp.intp_t))
    cdef cnp.intp_t* dominated = <cnp.intp_t*> malloc(n * n * sizeof(cnp.intp_t))
    cdef cnp.intp_t* n_dominated = <cnp.intp_t*> malloc(n * sizeof(cnp.intp_t))
    cdef cnp.intp_t* current = <cnp.intp_t*> malloc(n * sizeof(cnp.intp_t))
    cdef cnp.intp_t* nxt = <cnp.intp_t*> malloc(n * sizeof(cnp.intp_t))
    cdef cnp.intp_t* tmp
    if not count or not dominated or not n_dominated or not current or not nxt:
        free(count); free(dominated); free(n_dominated); free(current); free(nxt)
        raise MemoryError()
    cdef Py_ssize_t i, j, k, a, b, n_cur, n_next, front
    cdef bint le_ab, le_ba, lt_ab, lt_ba
    with nogil:
        for i in range(n):
            count[i] = 0
            n_dominated[i] = 0
        for i in range(n):
            for j in range(i + 1, n):
                le_ab = True
                le_ba = True
                lt_ab = False
                lt_ba = False
                for k in range(m):
                    if fv[i, k] > fv[j, k]:
                        le_ab = False
                        lt_ba = True
                    elif fv[i, k] < fv[j, k]:
                        le_ba = False
                        lt_ab = True
                if le_ab and lt_ab:
                    dominated[i * n + n_dominated[i]] = j
                    n_dominated[i] += 1
                    count[j] += 1
                elif le_ba and lt_ba:
                    dominated[j * n + n_dominated[j]] = i
                    n_dominated[j] += 1
                    count[i] += 1
        n_cur = 0
        for i in range(n):
            if count[i] == 0:
                current[n_cur] = i
                n_cur += 1
        front = 0
        while n_cur > 0:
            n_next = 0
            for a in range(n_cur):
                i = current[a]
                rv[i] = front
                for b in range(n_dominated[i]):
                    j = dominated[i * n + b]
                    count[j] -= 1
                    if count[j] == 0:
                        nxt[n_next] = j
                        n_next += 1
            tmp = current
            current = nxt
            nxt = tmp
            n_cur = n_next
            front += 1
    free(count)
    free(dominated)
    free(n_dominated)
    free(current)
    free(nxt)
    return ranks
