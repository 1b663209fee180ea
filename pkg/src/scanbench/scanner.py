"""Virtual depth scanning: viewpoint generation, per-view rendering, fusion.

Rendering shoots one ray per pixel from a pinhole camera and records the
Euclidean distance to the nearest surface hit (time-of-flight style), so a
point's camera-frame coordinates are ray_direction * depth.  Fusion maps
every view into the world frame with its pose and concatenates in order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bvh import Bvh, build_bvh
from .camera import CameraIntrinsics, CameraPose, look_at_pose
from .cloud import PointCloud
from .mesh import TriMesh

__all__ = [
    "ViewpointSpec",
    "sample_viewpoints_object",
    "sample_viewpoints_scene",
    "render_view",
    "render_views",
    "fuse_views",
]


@dataclass(frozen=True)
class ViewpointSpec:
    """How to place object-mode cameras on a spherical shell.

    count cameras are drawn uniformly over directions (or restricted to
    latitude bands when ``bands_deg`` is set, each entry a (center, half
    width) pair in degrees of polar angle) at radii uniform in
    [radius_min, radius_max], all looking at the origin.
    """

    count: int
    radius_min: float = 2.5
    radius_max: float = 3.5
    bands_deg: tuple[tuple[float, float], ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.count <= 0:
            raise ValueError("viewpoint count must be positive")
        if not 0 < self.radius_min <= self.radius_max:
            raise ValueError("need 0 < radius_min <= radius_max")
        if self.bands_deg is not None:
            bands = tuple((float(c), float(w)) for c, w in self.bands_deg)
            if not bands:
                raise ValueError("band list must not be empty when given")
            for c, w in bands:
                if w <= 0 or c - w < 0 or c + w > 180:
                    raise ValueError(f"band ({c}, {w}) outside the valid polar range")
            object.__setattr__(self, "bands_deg", bands)


def sample_viewpoints_object(spec: ViewpointSpec) -> list[CameraPose]:
    """Seeded camera poses on a shell around the origin, aimed at the origin.

    Directions are uniform on the sphere; with bands, each band is chosen
    with probability proportional to its spherical area and the direction is
    uniform within the band.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.count
    if spec.bands_deg is None:
        z = rng.uniform(-1.0, 1.0, n)
    else:
        lo = np.array([np.cos(np.deg2rad(c + w)) for c, w in spec.bands_deg])
        hi = np.array([np.cos(np.deg2rad(c - w)) for c, w in spec.bands_deg])
        areas = hi - lo  # shell area between the cosine bounds
        which = rng.choice(len(areas), size=n, p=areas / areas.sum())
        z = rng.uniform(lo[which], hi[which])
    az = rng.uniform(0.0, 2.0 * np.pi, n)
    r = rng.uniform(spec.radius_min, spec.radius_max, n)
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    dirs = np.stack([s * np.cos(az), s * np.sin(az), z], axis=1)
    target = np.zeros(3)
    return [look_at_pose(r[i] * dirs[i], target) for i in range(n)]


def _tri_box_overlap(box_min, box_max, tv) -> np.ndarray:
    """Separating-axis triangle/AABB test, vectorized over triangles.

    tv: (f, 3, 3).  Returns a boolean mask of triangles overlapping the box.
    """
    center = 0.5 * (box_min + box_max)
    half = 0.5 * (box_max - box_min)
    v = tv - center                                    # (f, 3, 3)

    overlap = np.ones(len(tv), dtype=bool)
    # box face normals
    for a in range(3):
        lo = v[:, :, a].min(axis=1)
        hi = v[:, :, a].max(axis=1)
        overlap &= (hi >= -half[a]) & (lo <= half[a])
    # triangle plane
    e0 = v[:, 1] - v[:, 0]
    e1 = v[:, 2] - v[:, 1]
    e2 = v[:, 0] - v[:, 2]
    normal = np.cross(e0, e1)
    d = -(normal * v[:, 0]).sum(axis=1)
    radius = (np.abs(normal) * half).sum(axis=1)
    overlap &= np.abs(d) <= radius
    # nine cross-product axes
    for edge in (e0, e1, e2):
        for a in range(3):
            axis = np.zeros((len(tv), 3))
            b, c = (a + 1) % 3, (a + 2) % 3
            axis[:, b] = -edge[:, c]
            axis[:, c] = edge[:, b]
            proj = np.einsum("fij,fj->fi", v, axis)    # (f, 3)
            rad = (np.abs(axis) * half).sum(axis=1)
            overlap &= (proj.min(axis=1) <= rad) & (proj.max(axis=1) >= -rad)
    return overlap


def sample_viewpoints_scene(mesh: TriMesh, cube_size: float = 1.0,
                            overlap: float = 0.5, dirs_per_cube: int = 100,
                            seed: int = 0) -> list[CameraPose]:
    """Cameras for scene scanning: cube centers inside free space.

    The scene bounding box is tiled with cubes of edge ``cube_size``
    overlapping by ``overlap`` on each axis.  Cubes intersecting no triangle
    are kept; from each kept cube's center, ``dirs_per_cube`` uniformly random
    view directions are emitted.  Raises if every cube touches geometry.
    """
    if not 0 <= overlap < cube_size:
        raise ValueError("need 0 <= overlap < cube_size")
    if dirs_per_cube <= 0:
        raise ValueError("dirs_per_cube must be positive")
    mn, mx = mesh.bounds()
    step = cube_size - overlap
    extent = mx - mn
    counts = np.maximum(1, np.ceil(np.maximum(extent - cube_size, 0.0) / step).astype(int) + 1)
    tv = mesh.vertices[mesh.faces]

    centers = []
    for ix in range(counts[0]):
        for iy in range(counts[1]):
            for iz in range(counts[2]):
                o = mn + step * np.array([ix, iy, iz])
                if _tri_box_overlap(o, o + cube_size, tv).any():
                    continue
                centers.append(o + cube_size / 2.0)
    if not centers:
        raise ValueError("no free cube found; the scene leaves no empty space "
                         f"at cube_size={cube_size}")

    rng = np.random.default_rng(seed)
    poses = []
    for c in centers:
        z = rng.uniform(-1.0, 1.0, dirs_per_cube)
        az = rng.uniform(0.0, 2.0 * np.pi, dirs_per_cube)
        s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        dirs = np.stack([s * np.cos(az), s * np.sin(az), z], axis=1)
        for d in dirs:
            poses.append(look_at_pose(c, c + d))
    return poses


def render_view(mesh: TriMesh, pose: CameraPose,
                intrinsics: CameraIntrinsics | None = None,
                view_id: int = 0, bvh: Bvh | None = None) -> PointCloud:
    """Depth-scan the mesh from one camera.

    One ray per pixel through the pixel center; a pixel contributes a point
    when the nearest hit lies inside the depth range.  Points are expressed
    in the camera frame; use :func:`fuse_views` to map them to the world.
    The cloud carries view, face, and face-normal provenance.
    """
    intr = intrinsics or CameraIntrinsics()
    tree = bvh if bvh is not None else build_bvh(mesh.vertices, mesh.faces)
    dirs_cam = intr.ray_directions()
    dirs_world = dirs_cam @ pose.rotation.T
    t, tri = tree.raycast(np.broadcast_to(pose.translation, dirs_world.shape).copy(),
                          dirs_world)
    near, far = intr.depth_range
    hit = (tri >= 0) & (t >= near) & (t <= far)
    pts = dirs_cam[hit] * t[hit, None]
    fidx = tri[hit]
    return PointCloud(
        positions=pts,
        view_index=np.full(len(pts), view_id, dtype=np.uint32),
        face_index=fidx,
        face_normals=_safe_face_normals(mesh, fidx),
    )


def _safe_face_normals(mesh: TriMesh, fidx: np.ndarray) -> np.ndarray:
    fn = mesh.face_normals[fidx]
    # a ray cannot hit a zero-area face, so these are unit already; guard anyway
    bad = np.linalg.norm(fn, axis=1) == 0
    if bad.any():
        fn = fn.copy()
        fn[bad] = (0.0, 0.0, 1.0)
    return fn


def render_views(mesh: TriMesh, poses: list[CameraPose],
                 intrinsics: CameraIntrinsics | None = None,
                 threads: int = 1) -> list[PointCloud]:
    """Render every pose, sharing one BVH.  ``threads > 1`` renders views in
    a thread pool (the ray kernel releases the GIL); results are ordered by
    pose regardless."""
    tree = build_bvh(mesh.vertices, mesh.faces)
    intr = intrinsics or CameraIntrinsics()
    if threads <= 1 or len(poses) <= 1:
        return [render_view(mesh, p, intr, view_id=i, bvh=tree)
                for i, p in enumerate(poses)]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as ex:
        futs = [ex.submit(render_view, mesh, p, intr, i, tree)
                for i, p in enumerate(poses)]
        return [f.result() for f in futs]


def fuse_views(views: list[PointCloud], poses: list[CameraPose]) -> PointCloud:
    """Map per-view camera-frame clouds into the world frame and concatenate.

    Views are fused in order; per-point view indices are preserved (or set to
    the list position when absent).
    """
    if len(views) != len(poses):
        raise ValueError(f"got {len(views)} views but {len(poses)} poses")
    out = []
    for i, (view, pose) in enumerate(zip(views, poses)):
        world = pose.to_world(view.positions)
        vi = view.view_index
        if vi is None:
            vi = np.full(len(view), i, dtype=np.uint32)
        out.append(PointCloud(
            positions=world,
            view_index=vi,
            face_index=view.face_index,
            face_normals=view.face_normals,
        ))
    return PointCloud.concatenate(out)
