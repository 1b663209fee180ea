"""Point clouds: container type, exact nearest-neighbor search, subsampling,
and PCA normal estimation.

All operations treat clouds as immutable and return new instances; optional
per-point arrays (normals, view/face provenance) are carried through
subsampling so downstream stages never lose track of where a point came from.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

__all__ = [
    "PointCloud",
    "SpatialIndex",
    "knn",
    "fps",
    "random_sample",
    "estimate_normals",
    "orient_normals",
]

_UNIT_TOL = 1e-6


@dataclass(frozen=True)
class PointCloud:
    """Positions plus optional oriented normals and per-point provenance.

    Attributes
    ----------
    positions : (n, 3) float64
    normals : (n, 3) float64, optional
        Unit vectors within 1e-6.
    view_index : (n,) uint32, optional
        Index of the camera view that produced each point.
    face_index : (n,) int64, optional
        Index of the source mesh face for sampled points.
    face_normals : (n, 3) float64, optional
        Unit normal of the source face (the second half of face provenance).
    normal_reliable : (n,) bool, optional
        Set by normal estimation; False where the neighborhood was degenerate.
    """

    positions: np.ndarray
    normals: np.ndarray | None = None
    view_index: np.ndarray | None = None
    face_index: np.ndarray | None = None
    face_normals: np.ndarray | None = None
    normal_reliable: np.ndarray | None = None

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (n, 3), got {pos.shape}")
        if not np.isfinite(pos).all():
            raise ValueError("positions must be finite")
        n = pos.shape[0]
        object.__setattr__(self, "positions", pos)

        def _check_vec3(name, arr, unit):
            if arr is None:
                return None
            arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
            if arr.shape != (n, 3):
                raise ValueError(f"{name} must be ({n}, 3), got {arr.shape}")
            if unit and n:
                err = np.abs(np.linalg.norm(arr, axis=1) - 1.0).max()
                if err > _UNIT_TOL:
                    raise ValueError(f"{name} must be unit length within {_UNIT_TOL}")
            return arr

        object.__setattr__(self, "normals", _check_vec3("normals", self.normals, True))
        object.__setattr__(self, "face_normals", _check_vec3("face_normals", self.face_normals, True))

        if self.view_index is not None:
            vi = np.ascontiguousarray(np.asarray(self.view_index, dtype=np.uint32))
            if vi.shape != (n,):
                raise ValueError(f"view_index must be ({n},), got {vi.shape}")
            object.__setattr__(self, "view_index", vi)
        if self.face_index is not None:
            fi = np.ascontiguousarray(np.asarray(self.face_index, dtype=np.int64))
            if fi.shape != (n,):
                raise ValueError(f"face_index must be ({n},), got {fi.shape}")
            object.__setattr__(self, "face_index", fi)
        if self.normal_reliable is not None:
            nr = np.ascontiguousarray(np.asarray(self.normal_reliable, dtype=bool))
            if nr.shape != (n,):
                raise ValueError(f"normal_reliable must be ({n},), got {nr.shape}")
            object.__setattr__(self, "normal_reliable", nr)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def take(self, indices) -> "PointCloud":
        """Subset (or reorder) by index array; all per-point arrays follow."""
        idx = np.asarray(indices)
        return PointCloud(
            positions=self.positions[idx],
            normals=None if self.normals is None else self.normals[idx],
            view_index=None if self.view_index is None else self.view_index[idx],
            face_index=None if self.face_index is None else self.face_index[idx],
            face_normals=None if self.face_normals is None else self.face_normals[idx],
            normal_reliable=None if self.normal_reliable is None else self.normal_reliable[idx],
        )

    def with_positions(self, positions: np.ndarray) -> "PointCloud":
        """Same cloud with positions replaced (count must not change)."""
        pos = np.asarray(positions, dtype=np.float64)
        if pos.shape != self.positions.shape:
            raise ValueError("with_positions must preserve the point count")
        return replace(self, positions=pos)

    @staticmethod
    def concatenate(clouds: list["PointCloud"]) -> "PointCloud":
        """Concatenate clouds in order; optional arrays survive only if present everywhere."""
        if not clouds:
            return PointCloud(positions=np.zeros((0, 3)))
        pos = np.concatenate([c.positions for c in clouds], axis=0)

        def _cat(field):
            vals = [getattr(c, field) for c in clouds]
            if any(v is None for v in vals):
                return None
            return np.concatenate(vals, axis=0)

        return PointCloud(
            positions=pos,
            normals=_cat("normals"),
            view_index=_cat("view_index"),
            face_index=_cat("face_index"),
            face_normals=_cat("face_normals"),
            normal_reliable=_cat("normal_reliable"),
        )


class SpatialIndex:
    """Immutable exact nearest-neighbor index over a fixed set of positions.

    Backed by a balanced kd-tree; all queries return exactly the brute-force
    result, with distance ties broken by ascending point index.
    """

    def __init__(self, positions: np.ndarray):
        pos = np.ascontiguousarray(np.asarray(positions, dtype=np.float64))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("SpatialIndex expects (n, 3) positions")
        if pos.shape[0] == 0:
            raise ValueError("SpatialIndex needs at least one point")
        self._positions = pos
        self._tree = cKDTree(pos, balanced_tree=True, copy_data=True)

    def __len__(self) -> int:
        return self._positions.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    def query(self, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Batched k-nearest-neighbor query.

        Returns (indices, distances), each (q, k), rows sorted ascending by
        distance with ties broken by ascending point index.
        """
        n = len(self)
        if not 1 <= k <= n:
            raise ValueError(f"k must be in [1, {n}], got {k}")
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))

        # query one extra neighbor so boundary ties are detectable
        kq = min(k + 1, n)
        dist, idx = self._tree.query(q, k=kq)
        dist = dist.reshape(len(q), kq)
        idx = idx.reshape(len(q), kq)

        # distances recomputed with a fixed formula so results are reproducible
        # independent of kd-tree internals
        dist = np.linalg.norm(q[:, None, :] - self._positions[idx], axis=2)

        out_i = np.empty((len(q), k), dtype=np.int64)
        out_d = np.empty((len(q), k), dtype=np.float64)
        for r in range(len(q)):
            di, ii = dist[r], idx[r]
            if kq > k and di[k] == di[k - 1]:
                # tie straddles the cutoff: pull every candidate at that distance
                cand = self._tree.query_ball_point(q[r], r=di[k - 1] * (1 + 1e-9) + 1e-300)
                cand = np.asarray(sorted(cand), dtype=np.int64)
                dc = np.linalg.norm(self._positions[cand] - q[r], axis=1)
                order = np.lexsort((cand, dc))[:k]
                out_i[r], out_d[r] = cand[order], dc[order]
            else:
                order = np.lexsort((ii[:k], di[:k]))
                out_i[r], out_d[r] = ii[:k][order], di[:k][order]
        return out_i, out_d


def knn(index: SpatialIndex, query, k: int) -> tuple[np.ndarray, np.ndarray]:
    """The k nearest indexed points to a single query point.

    Returns (indices, distances) sorted ascending by distance; exact ties are
    broken by ascending point index.
    """
    q = np.asarray(query, dtype=np.float64).reshape(1, 3)
    idx, dist = index.query(q, k)
    return idx[0], dist[0]


@njit(cache=True, nogil=True)
def _fps_brute(pts, start, m):
    n = pts.shape[0]
    sel = np.empty(m, np.int64)
    mind = np.full(n, np.inf)
    cur = start
    sel[0] = cur
    for j in range(1, m):
        px, py, pz = pts[cur, 0], pts[cur, 1], pts[cur, 2]
        mind[cur] = -1.0
        best = -1.0
        bi = -1
        for i in range(n):
            di = mind[i]
            if di < 0.0:
                continue
            dx = pts[i, 0] - px
            dy = pts[i, 1] - py
            dz = pts[i, 2] - pz
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < di:
                di = d2
                mind[i] = d2
            if di > best:  # strict: the lowest index wins ties
                best = di
                bi = i
        sel[j] = bi
        cur = bi
    return sel


@njit(cache=True, nogil=True)
def _aabb_dist2(px, py, pz, mn, mx):
    d2 = 0.0
    d = mn[0] - px
    if d > 0.0:
        d2 += d * d
    d = px - mx[0]
    if d > 0.0:
        d2 += d * d
    d = mn[1] - py
    if d > 0.0:
        d2 += d * d
    d = py - mx[1]
    if d > 0.0:
        d2 += d * d
    d = mn[2] - pz
    if d > 0.0:
        d2 += d * d
    d = pz - mx[2]
    if d > 0.0:
        d2 += d * d
    return d2


@njit(cache=True, nogil=True)
def _fps_grid(pts, oidx, pcell, cell_start, cbmin, cbmax, cell_block,
              blk_cell_start, bbmin, bbmax, start_pos, m):
    # Exact greedy FPS over a two-level spatial grid.  Cells cache the max of
    # the running min-distance field; a cell (or whole block) whose cached max
    # cannot beat the lower-bound distance to the newly selected point is
    # skipped without touching its points.  Results are bit-identical to the
    # brute-force greedy rule, including index tie-breaks.
    n = pts.shape[0]
    C = cell_start.shape[0] - 1
    B = blk_cell_start.shape[0] - 1

    mind = np.full(n, np.inf)
    cmax = np.full(C, np.inf)
    carg = np.full(C, -1, np.int64)
    bmax = np.full(B, np.inf)
    sel = np.empty(m, np.int64)

    cur = start_pos
    sel[0] = oidx[cur]
    for j in range(1, m):
        px, py, pz = pts[cur, 0], pts[cur, 1], pts[cur, 2]
        mind[cur] = -1.0
        # the selected point's own cell must be rescanned even if the
        # lower-bound test would skip it (its max/argmax just went stale)
        cmax[pcell[cur]] = np.inf
        bmax[cell_block[pcell[cur]]] = np.inf

        for b in range(B):
            if _aabb_dist2(px, py, pz, bbmin[b], bbmax[b]) >= bmax[b]:
                continue
            for c in range(blk_cell_start[b], blk_cell_start[b + 1]):
                if _aabb_dist2(px, py, pz, cbmin[c], cbmax[c]) >= cmax[c]:
                    continue
                mx = -1.0
                ai = -1
                for i in range(cell_start[c], cell_start[c + 1]):
                    di = mind[i]
                    if di < 0.0:
                        continue
                    dx = pts[i, 0] - px
                    dy = pts[i, 1] - py
                    dz = pts[i, 2] - pz
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < di:
                        di = d2
                        mind[i] = d2
                    if di > mx:  # within a cell, ascending original index
                        mx = di
                        ai = i
                cmax[c] = mx
                carg[c] = ai
            nb = -1.0
            for c in range(blk_cell_start[b], blk_cell_start[b + 1]):
                if cmax[c] > nb:
                    nb = cmax[c]
            bmax[b] = nb

        best = -1.0
        bi = -1
        for b in range(B):
            if bmax[b] < best:
                continue
            for c in range(blk_cell_start[b], blk_cell_start[b + 1]):
                ai = carg[c]
                if ai < 0:
                    continue
                v = cmax[c]
                if v > best or (v == best and (bi < 0 or oidx[ai] < oidx[bi])):
                    best = v
                    bi = ai
        sel[j] = oidx[bi]
        cur = bi
    return sel


def _fps_indices(positions: np.ndarray, n: int, start: int) -> np.ndarray:
    npts = positions.shape[0]
    if npts * n <= (1 << 26) or npts < 4096:
        return np.asarray(_fps_brute(positions, start, n))

    # bucket the points; aim for a few dozen points per occupied cell
    mn = positions.min(axis=0)
    mx = positions.max(axis=0)
    extent = mx - mn
    gmax = max(extent.max(), 1e-300)
    res = int(np.clip(round(np.sqrt(npts / 64.0)), 4, 1024))
    h = gmax / res
    dims = np.maximum(1, np.ceil(extent / h).astype(np.int64))
    ic = np.clip(((positions - mn) / h).astype(np.int64), 0, dims - 1)
    lin = (ic[:, 0] * dims[1] + ic[:, 1]) * dims[2] + ic[:, 2]

    order = np.argsort(lin, kind="stable")  # stable: ascending index inside a cell
    pts = np.ascontiguousarray(positions[order])
    oidx = order.astype(np.int64)
    lin_sorted = lin[order]
    _, starts = np.unique(lin_sorted, return_index=True)
    cell_start = np.append(starts, npts).astype(np.int64)
    C = len(starts)

    pcell = np.empty(npts, dtype=np.int64)
    for c in range(C):
        pcell[cell_start[c]:cell_start[c + 1]] = c

    # tight per-cell boxes give stronger skip bounds than the grid lattice
    cbmin = np.minimum.reduceat(pts, cell_start[:-1], axis=0)
    cbmax = np.maximum.reduceat(pts, cell_start[:-1], axis=0)

    blocksize = 64
    blk_bounds = np.arange(0, C + blocksize, blocksize)
    blk_bounds[-1] = min(blk_bounds[-1], C)
    blk_bounds = np.unique(np.clip(blk_bounds, 0, C)).astype(np.int64)
    bbmin = np.minimum.reduceat(cbmin, blk_bounds[:-1], axis=0)
    bbmax = np.maximum.reduceat(cbmax, blk_bounds[:-1], axis=0)
    cell_block = np.searchsorted(blk_bounds, np.arange(C), side="right") - 1

    inv = np.empty(npts, dtype=np.int64)
    inv[order] = np.arange(npts)
    return np.asarray(_fps_grid(
        pts, oidx, pcell, cell_start,
        np.ascontiguousarray(cbmin), np.ascontiguousarray(cbmax),
        cell_block.astype(np.int64), blk_bounds,
        np.ascontiguousarray(bbmin), np.ascontiguousarray(bbmax),
        inv[start], n,
    ))


def fps(cloud: PointCloud, n: int, seed_policy: str = "centroid-farthest") -> PointCloud:
    """Greedy farthest point sampling down to n points.

    The first point is the one farthest from the centroid (``seed_policy
    "centroid-farthest"``, the default) or point 0 (``"first-index"``); each
    following point maximizes the minimum distance to the already-selected
    set, ties broken by the lowest point index.  Output preserves selection
    order and carries all provenance.
    """
    npts = len(cloud)
    if not 1 <= n <= npts:
        raise ValueError(f"fps: n must be in [1, {npts}], got {n}")
    if seed_policy == "centroid-farthest":
        centroid = cloud.positions.mean(axis=0)
        d2 = ((cloud.positions - centroid) ** 2).sum(axis=1)
        start = int(np.argmax(d2))  # argmax returns the first (lowest) index on ties
    elif seed_policy == "first-index":
        start = 0
    else:
        raise ValueError(f"unknown seed_policy {seed_policy!r}")
    sel = _fps_indices(cloud.positions, n, start)
    return cloud.take(sel)


def random_sample(cloud: PointCloud, n: int, seed: int) -> PointCloud:
    """n distinct points drawn uniformly without replacement, seeded."""
    npts = len(cloud)
    if not 0 <= n <= npts:
        raise ValueError(f"random_sample: n must be in [0, {npts}], got {n}")
    rng = np.random.default_rng(seed)
    sel = rng.choice(npts, size=n, replace=False)
    return cloud.take(sel)


def estimate_normals(cloud: PointCloud, k: int = 40) -> PointCloud:
    """Unoriented per-point normals by PCA over the k nearest neighbors.

    The normal is the eigenvector of the smallest eigenvalue of the
    neighborhood covariance; its sign is unspecified at this stage.  Points
    whose neighborhood covariance has rank < 2 keep that eigenvector but are
    marked False in ``normal_reliable``.
    """
    npts = len(cloud)
    if npts <= k:
        raise ValueError(f"estimate_normals needs more than k={k} points, got {npts}")
    index = SpatialIndex(cloud.positions)
    # k+1 then drop each point's own entry: neighbors exclude the point itself
    idx, _ = index.query(cloud.positions, k + 1)
    rows = np.arange(npts)
    self_hit = idx == rows[:, None]
    # keep the k entries that are not the first occurrence of self
    first_self = np.where(self_hit.any(axis=1), self_hit.argmax(axis=1), k)
    keep = np.ones((npts, k + 1), dtype=bool)
    keep[rows, first_self] = False
    nbr = idx[keep].reshape(npts, k)

    pts = cloud.positions[nbr]                     # (n, k, 3)
    centered = pts - pts.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    evals, evecs = np.linalg.eigh(cov)             # ascending eigenvalues
    normals = evecs[:, :, 0]
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    normals = normals / norms

    scale = np.maximum(evals[:, 2], 1e-300)
    reliable = evals[:, 1] > 1e-12 * scale
    return replace(cloud, normals=normals, normal_reliable=reliable)


def orient_normals(cloud: PointCloud, camera_positions) -> PointCloud:
    """Flip each normal so it faces the camera that captured its point."""
    if cloud.normals is None:
        raise ValueError("orient_normals requires estimated normals")
    if cloud.view_index is None:
        raise ValueError("orient_normals requires per-point view provenance")
    cams = np.asarray(camera_positions, dtype=np.float64).reshape(-1, 3)
    if len(cloud) and cloud.view_index.max() >= len(cams):
        raise ValueError("view index exceeds the camera position list")
    view_vec = cams[cloud.view_index] - cloud.positions
    bad = np.where((view_vec == 0).all(axis=1))[0]
    if bad.size:
        raise ValueError(
            f"orient_normals: {bad.size} points coincide with their camera "
            f"(first indices {bad[:5].tolist()}); view direction undefined"
        )
    sign = np.where((view_vec * cloud.normals).sum(axis=1) < 0, -1.0, 1.0)
    return replace(cloud, normals=cloud.normals * sign[:, None])
