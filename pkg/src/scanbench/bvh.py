"""Ray/triangle intersection accelerated by a bounding volume hierarchy.

The BVH is built once per mesh (median split on the widest centroid axis)
and queried with a stack-based nearest-hit traversal compiled by numba.
Results are exact: the nearest hit along each ray, with the watertight-free
Moller-Trumbore test (backfaces included) and ties on t broken by the lowest
triangle index, matching an exhaustive scan over all triangles.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["Bvh", "build_bvh"]

_LEAF_SIZE = 4
_DET_EPS = 1e-9


class Bvh:
    """Flattened BVH over one triangle soup; query with :meth:`raycast`."""

    def __init__(self, nodes_min, nodes_max, left, right, start, count,
                 v0, e1, e2, tri_ids):
        self.nodes_min = nodes_min
        self.nodes_max = nodes_max
        self.left = left
        self.right = right
        self.start = start
        self.count = count
        self.v0 = v0
        self.e1 = e1
        self.e2 = e2
        self.tri_ids = tri_ids

    def raycast(self, origins, directions, t_min: float = 1e-9):
        """Nearest hit per ray.

        Returns (t, tri): ray parameter (inf on miss) and triangle index
        (-1 on miss).  Directions need not be unit length; t is expressed in
        units of the direction vector.
        """
        o = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
        d = np.ascontiguousarray(np.atleast_2d(directions), dtype=np.float64)
        if o.shape[0] == 1 and d.shape[0] > 1:
            o = np.broadcast_to(o, d.shape).copy()
        if o.shape != d.shape or o.shape[1] != 3:
            raise ValueError("origins and directions must both be (r, 3)")
        t = np.empty(o.shape[0], dtype=np.float64)
        tri = np.empty(o.shape[0], dtype=np.int64)
        _raycast_kernel(self.nodes_min, self.nodes_max, self.left, self.right,
                        self.start, self.count, self.v0, self.e1, self.e2,
                        self.tri_ids, o, d, t_min, t, tri)
        return t, tri


def build_bvh(vertices: np.ndarray, faces: np.ndarray) -> Bvh:
    """Build a median-split BVH over the given triangles."""
    verts = np.asarray(vertices, dtype=np.float64)
    fcs = np.asarray(faces, dtype=np.int64)
    if fcs.ndim != 2 or fcs.shape[1] != 3 or fcs.shape[0] == 0:
        raise ValueError("build_bvh needs a non-empty (f, 3) face array")
    tv = verts[fcs]                                   # (f, 3, 3)
    tri_min = tv.min(axis=1)
    tri_max = tv.max(axis=1)
    centroids = tv.mean(axis=1)
    nf = len(fcs)

    order = np.arange(nf)
    nodes_min, nodes_max = [], []
    left, right, start, count = [], [], [], []

    # (range start, range end, node slot); children are appended and patched in
    stack = [(0, nf, 0)]
    for arr in (nodes_min, nodes_max):
        arr.append(None)
    for arr in (left, right, start, count):
        arr.append(0)
    while stack:
        lo, hi, slot = stack.pop()
        ids = order[lo:hi]
        nodes_min[slot] = tri_min[ids].min(axis=0)
        nodes_max[slot] = tri_max[ids].max(axis=0)
        if hi - lo <= _LEAF_SIZE:
            left[slot] = -1
            right[slot] = -1
            start[slot] = lo
            count[slot] = hi - lo
            continue
        cen = centroids[ids]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        mid = (hi - lo) // 2
        part = np.argpartition(cen[:, axis], mid)
        order[lo:hi] = ids[part]
        cslot = len(left)
        for arr in (nodes_min, nodes_max):
            arr.extend([None, None])
        for arr in (left, right, start, count):
            arr.extend([0, 0])
        left[slot] = cslot
        right[slot] = cslot + 1
        start[slot] = 0
        count[slot] = 0
        stack.append((lo, lo + mid, cslot))
        stack.append((lo + mid, hi, cslot + 1))

    tv_ord = tv[order]
    return Bvh(
        nodes_min=np.ascontiguousarray(np.stack(nodes_min)),
        nodes_max=np.ascontiguousarray(np.stack(nodes_max)),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        start=np.asarray(start, dtype=np.int64),
        count=np.asarray(count, dtype=np.int64),
        v0=np.ascontiguousarray(tv_ord[:, 0]),
        e1=np.ascontiguousarray(tv_ord[:, 1] - tv_ord[:, 0]),
        e2=np.ascontiguousarray(tv_ord[:, 2] - tv_ord[:, 0]),
        tri_ids=order.astype(np.int64),
    )


@njit(cache=True, nogil=True)
def _ray_box(ox, oy, oz, dx, dy, dz, mn, mx, t_min, t_cap):
    # entry parameter of the slab intersection, or inf when the ray misses
    # the box within (t_min, t_cap)
    t0 = t_min
    t1 = t_cap
    for a in range(3):
        if a == 0:
            o = ox
            d = dx
        elif a == 1:
            o = oy
            d = dy
        else:
            o = oz
            d = dz
        if d != 0.0:
            ta = (mn[a] - o) / d
            tb = (mx[a] - o) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                return np.inf
        else:
            if o < mn[a] or o > mx[a]:
                return np.inf
    return t0


@njit(cache=True, nogil=True)
def _raycast_kernel(nmin, nmax, left, right, start, count, v0, e1, e2,
                    tri_ids, origins, dirs, t_min, out_t, out_tri):
    nrays = origins.shape[0]
    stack_node = np.empty(128, np.int64)
    stack_t = np.empty(128, np.float64)
    for r in range(nrays):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]
        best_t = np.inf
        best_i = -1

        te = _ray_box(ox, oy, oz, dx, dy, dz, nmin[0], nmax[0], t_min, np.inf)
        sp = 0
        if te < np.inf:
            stack_node[0] = 0
            stack_t[0] = te
            sp = 1
        while sp > 0:
            sp -= 1
            if stack_t[sp] >= best_t:
                continue
            node = stack_node[sp]
            if count[node] > 0:
                for kk in range(start[node], start[node] + count[node]):
                    # Moller-Trumbore, backfaces kept
                    e1x = e1[kk, 0]
                    e1y = e1[kk, 1]
                    e1z = e1[kk, 2]
                    e2x = e2[kk, 0]
                    e2y = e2[kk, 1]
                    e2z = e2[kk, 2]
                    px = dy * e2z - dz * e2y
                    py = dz * e2x - dx * e2z
                    pz = dx * e2y - dy * e2x
                    det = e1x * px + e1y * py + e1z * pz
                    if det > -_DET_EPS and det < _DET_EPS:
                        continue
                    inv = 1.0 / det
                    tx = ox - v0[kk, 0]
                    ty = oy - v0[kk, 1]
                    tz = oz - v0[kk, 2]
                    u = (tx * px + ty * py + tz * pz) * inv
                    if u < 0.0 or u > 1.0:
                        continue
                    qx = ty * e1z - tz * e1y
                    qy = tz * e1x - tx * e1z
                    qz = tx * e1y - ty * e1x
                    v = (dx * qx + dy * qy + dz * qz) * inv
                    if v < 0.0 or u + v > 1.0:
                        continue
                    t = (e2x * qx + e2y * qy + e2z * qz) * inv
                    if t < t_min:
                        continue
                    ti = tri_ids[kk]
                    if t < best_t or (t == best_t and ti < best_i):
                        best_t = t
                        best_i = ti
            else:
                c1 = left[node]
                c2 = right[node]
                t1 = _ray_box(ox, oy, oz, dx, dy, dz, nmin[c1], nmax[c1],
                              t_min, best_t)
                t2 = _ray_box(ox, oy, oz, dx, dy, dz, nmin[c2], nmax[c2],
                              t_min, best_t)
                if t1 > t2:
                    c1, c2 = c2, c1
                    t1, t2 = t2, t1
                # push the farther child first so the nearer pops first
                if t2 < best_t:
                    stack_node[sp] = c2
                    stack_t[sp] = t2
                    sp += 1
                if t1 < best_t:
                    stack_node[sp] = c1
                    stack_t[sp] = t1
                    sp += 1
        out_t[r] = best_t
        out_tri[r] = best_i
