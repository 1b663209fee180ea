"""Triangle meshes: validated container, topology analysis, normalization,
surface sampling, and multi-view visibility coverage.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .bvh import build_bvh
from .camera import CameraIntrinsics, CameraPose
from .cloud import PointCloud

__all__ = [
    "TriMesh",
    "TopologyReport",
    "topology_report",
    "normalize",
    "sample_surface",
    "visibility_coverage",
]


@dataclass(frozen=True)
class TriMesh:
    """An indexed triangle mesh.

    vertices: (v, 3) float64.  faces: (f, 3) integer indices into vertices;
    every face must reference three distinct valid vertices.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        faces = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError(f"vertices must be (v, 3), got {verts.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must be (f, 3), got {faces.shape}")
        if not np.isfinite(verts).all():
            raise ValueError("vertices contain non-finite values")
        if faces.size:
            if faces.min() < 0 or faces.max() >= len(verts):
                raise ValueError("face indices out of range")
            if ((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2])
                    | (faces[:, 0] == faces[:, 2])).any():
                raise ValueError("faces must reference three distinct vertices")
        verts.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @cached_property
    def face_areas(self) -> np.ndarray:
        tv = self.vertices[self.faces]
        cross = np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit normals; zero-area faces get a zero vector."""
        tv = self.vertices[self.faces]
        cross = np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])
        norm = np.linalg.norm(cross, axis=1, keepdims=True)
        safe = np.where(norm > 0, norm, 1.0)
        return cross / safe

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.num_vertices == 0:
            raise ValueError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass(frozen=True)
class TopologyReport:
    """Connectivity summary of a mesh.

    genus is the maximum over connected components and is None whenever the
    mesh is not both watertight and manifold (the number is meaningless
    there).
    """

    watertight: bool
    edge_manifold: bool
    vertex_manifold: bool
    genus: int | None
    component_count: int

    @property
    def manifold(self) -> bool:
        return self.edge_manifold and self.vertex_manifold


def _mesh_edges(faces: np.ndarray):
    """Directed edges (3f, 2) and their undirected sort for a face array."""
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    return directed, undirected


def topology_report(mesh: TriMesh) -> TopologyReport:
    """Analyze watertightness, manifoldness, genus, and component count.

    Watertight means every undirected edge is shared by exactly two faces
    with opposite orientation (a lone triangle is not watertight).  Vertex
    manifoldness requires the faces around each vertex to form a single fan.
    """
    faces = mesh.faces
    nf = faces.shape[0]
    if nf == 0:
        return TopologyReport(False, True, True, None, 0)

    directed, undirected = _mesh_edges(faces)
    uniq_und, und_inv, und_counts = np.unique(
        undirected, axis=0, return_inverse=True, return_counts=True)
    _, dir_counts = np.unique(directed, axis=0, return_counts=True)

    edge_manifold = bool((und_counts <= 2).all())
    watertight = bool((und_counts == 2).all() and (dir_counts == 1).all())

    # face adjacency through shared interior edges
    face_of_edge = np.tile(np.arange(nf), 3)
    order = np.argsort(und_inv, kind="stable")
    sorted_eid = und_inv[order]
    sorted_face = face_of_edge[order]
    starts = np.searchsorted(sorted_eid, np.arange(len(uniq_und)))
    ends = np.append(starts[1:], len(sorted_eid))

    pair_edges = np.where(und_counts == 2)[0]
    fa = sorted_face[starts[pair_edges]]
    fb = sorted_face[starts[pair_edges] + 1]
    # edges with more than two faces still connect all their faces
    extra_a, extra_b = [], []
    for e in np.where(und_counts > 2)[0]:
        members = sorted_face[starts[e]:ends[e]]
        extra_a.extend(members[:-1])
        extra_b.extend(members[1:])
    all_a = np.concatenate([fa, np.asarray(extra_a, dtype=np.int64)])
    all_b = np.concatenate([fb, np.asarray(extra_b, dtype=np.int64)])

    graph = coo_matrix((np.ones(len(all_a)), (all_a, all_b)), shape=(nf, nf))
    n_comp, face_label = connected_components(graph, directed=False)

    # vertex fans via the corner graph: corner c = face j at corner slot s
    # holds vertex faces[j, s]; two corners at the same vertex are linked when
    # their faces share an edge through that vertex
    corner_vertex = faces.T.reshape(-1)            # corner id = slot * nf + face
    ca, cb = [], []
    for e in range(len(uniq_und)):
        if und_counts[e] < 2:
            continue
        members = sorted_face[starts[e]:ends[e]]
        va, vb = uniq_und[e]
        for m in range(1, len(members)):
            for v in (va, vb):
                # corner of vertex v in face members[0] and members[m]
                s0 = _corner_slot(faces[members[0]], v)
                sm = _corner_slot(faces[members[m]], v)
                ca.append(s0 * nf + members[0])
                cb.append(sm * nf + members[m])
    n_corners = 3 * nf
    if ca:
        cgraph = coo_matrix((np.ones(len(ca)), (ca, cb)), shape=(n_corners, n_corners))
        _, corner_label = connected_components(cgraph, directed=False)
    else:
        corner_label = np.arange(n_corners)

    pairs = np.unique(np.stack([corner_vertex, corner_label], axis=1), axis=0)
    used_vertices, fan_counts = np.unique(pairs[:, 0], return_counts=True)
    vertex_manifold = bool((fan_counts == 1).all())

    genus = None
    if watertight and edge_manifold and vertex_manifold:
        genus = 0
        for comp in range(n_comp):
            comp_faces = faces[face_label == comp]
            v_c = len(np.unique(comp_faces))
            f_c = len(comp_faces)
            _, und_c = _mesh_edges(comp_faces)
            e_c = len(np.unique(und_c, axis=0))
            chi = v_c - e_c + f_c
            if (2 - chi) % 2 != 0:
                raise RuntimeError("odd Euler characteristic on a closed surface")
            genus = max(genus, (2 - chi) // 2)

    return TopologyReport(
        watertight=watertight,
        edge_manifold=edge_manifold,
        vertex_manifold=vertex_manifold,
        genus=genus,
        component_count=int(n_comp),
    )


def _corner_slot(face, vertex) -> int:
    if face[0] == vertex:
        return 0
    if face[1] == vertex:
        return 1
    return 2


def normalize(mesh: TriMesh, mode: str = "object") -> TriMesh:
    """Center the mesh and scale it to a canonical size.

    "object": center the bounding box at the origin and scale so the largest
    half-extent is 1 (the mesh fits the unit cube [-1, 1]^3 tightly).
    "scene": translate the bounding-box minimum to the origin, keep scale.
    """
    if mesh.num_vertices == 0:
        raise ValueError("cannot normalize an empty mesh")
    mn, mx = mesh.bounds()
    if mode == "object":
        center = 0.5 * (mn + mx)
        half = 0.5 * (mx - mn).max()
        if half == 0:
            raise ValueError("degenerate mesh: zero extent")
        verts = (mesh.vertices - center) / half
    elif mode == "scene":
        verts = mesh.vertices - mn
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    return TriMesh(vertices=verts, faces=mesh.faces)


def sample_surface(mesh: TriMesh, n: int, seed: int) -> PointCloud:
    """n points drawn uniformly by area, with face provenance.

    Faces are chosen proportionally to area and barycentric coordinates
    uniformly inside each face.  The returned cloud carries face_index and
    face_normals.
    """
    if n < 0:
        raise ValueError("sample count must be non-negative")
    areas = mesh.face_areas
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has zero total area")
    rng = np.random.default_rng(seed)
    fidx = rng.choice(mesh.num_faces, size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    tv = mesh.vertices[mesh.faces[fidx]]
    pts = tv[:, 0] + u[:, None] * (tv[:, 1] - tv[:, 0]) + v[:, None] * (tv[:, 2] - tv[:, 0])
    fn = mesh.face_normals[fidx]
    return PointCloud(positions=pts, face_index=fidx.astype(np.int64), face_normals=fn)


def visibility_coverage(mesh: TriMesh, poses: list[CameraPose], samples: int,
                        seed: int = 0,
                        intrinsics: CameraIntrinsics | None = None) -> float:
    """Fraction of sampled surface points visible from at least one pose.

    A sample is visible from a pose when it faces the camera (positive dot of
    its face normal with the direction to the camera) and no triangle
    occludes the segment between them.  With intrinsics given, the sample
    must additionally project inside the image and lie within the depth
    range.  Coverage is monotone non-decreasing in the pose set.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    if not poses:
        return 0.0
    cloud = sample_surface(mesh, samples, seed)
    pts = cloud.positions
    nrm = cloud.face_normals
    tree = build_bvh(mesh.vertices, mesh.faces)

    if intrinsics is not None:
        tan_v = np.tan(np.deg2rad(intrinsics.vfov_deg) / 2.0)
        tan_h = tan_v * intrinsics.width / intrinsics.height
        d_near, d_far = intrinsics.depth_range

    visible = np.zeros(samples, dtype=bool)
    for pose in poses:
        todo = np.where(~visible)[0]
        if todo.size == 0:
            break
        cam = pose.position
        to_cam = cam - pts[todo]
        dist = np.linalg.norm(to_cam, axis=1)
        front = (to_cam * nrm[todo]).sum(axis=1) > 0
        cand = todo[front]
        if intrinsics is not None and cand.size:
            local = pose.to_camera(pts[cand])
            z = local[:, 2]
            with np.errstate(divide="ignore", invalid="ignore"):
                in_frust = (z > 0) \
                    & (np.abs(local[:, 0] / z) <= tan_h) \
                    & (np.abs(local[:, 1] / z) <= tan_v)
            d = np.linalg.norm(local, axis=1)
            in_frust &= (d >= d_near) & (d <= d_far)
            cand = cand[in_frust]
        if cand.size == 0:
            continue
        seg = pts[cand] - cam
        seg_len = np.linalg.norm(seg, axis=1)
        t, _ = tree.raycast(np.broadcast_to(cam, (cand.size, 3)).copy(), seg / seg_len[:, None])
        # nothing strictly closer than the sample blocks it (tolerance covers
        # the ray hitting the sample's own triangle)
        visible[cand] = t >= seg_len * (1.0 - 1e-6)
    return float(visible.mean())
