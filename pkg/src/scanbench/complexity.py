"""Surface-complexity scoring from discrete curvature, and the corpus
partition into low/middle/high complexity groups.

Mean curvature comes from the cotangent-weighted mean-curvature normal and
Gaussian curvature from the angle defect, both over mixed Voronoi areas
(the standard mixed-Voronoi cotangent discretization).  The complexity score is the
vertex average of (3/2) k^2 - (1/2) g, an estimate of the expected squared
normal curvature over directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh, topology_report

__all__ = [
    "CurvatureField",
    "vertex_curvatures",
    "complexity_score",
    "partition_corpus",
]


@dataclass(frozen=True)
class CurvatureField:
    """Per-vertex discrete curvatures.

    mean_curvature (k) is non-negative (a magnitude, 1/length);
    gaussian_curvature (g) is signed (1/length^2); mixed_area is the vertex's
    mixed Voronoi area (length^2).  angle_defect is the raw 2*pi minus the
    incident-angle sum, before area normalization (useful for the discrete
    Gauss-Bonnet identity sum(defect) = 2*pi*chi on closed meshes).  interior
    is False for boundary and unreferenced vertices, where the defect-based
    quantities are not meaningful.
    """

    mean_curvature: np.ndarray
    gaussian_curvature: np.ndarray
    mixed_area: np.ndarray
    angle_defect: np.ndarray
    interior: np.ndarray


def vertex_curvatures(mesh: TriMesh) -> CurvatureField:
    """Discrete mean/Gaussian curvature per vertex.

    Requires a manifold mesh (error otherwise).  On meshes with boundary the
    boundary vertices carry meaningless defects (the 2*pi reference assumes a
    full fan); interior vertices are unaffected.
    """
    report = topology_report(mesh)
    if not (report.edge_manifold and report.vertex_manifold):
        raise ValueError("vertex curvatures require a manifold mesh")
    if mesh.num_faces == 0:
        raise ValueError("mesh has no faces")

    verts = mesh.vertices
    faces = mesh.faces
    nv = mesh.num_vertices
    tv = verts[faces]                                    # (f, 3, 3)

    # corner angles and cotangents: angle[f, c] at vertex faces[f, c]
    e_next = np.roll(tv, -1, axis=1) - tv                # edge c -> c+1
    e_prev = np.roll(tv, 1, axis=1) - tv                 # edge c -> c-1
    dots = (e_next * e_prev).sum(axis=2)
    crosses = np.linalg.norm(np.cross(e_next, e_prev), axis=2)
    crosses_safe = np.where(crosses > 0, crosses, 1.0)
    angles = np.arctan2(crosses, dots)
    cot = dots / crosses_safe

    # mixed Voronoi area per corner (Meyer obtuse handling)
    sq_next = (e_next ** 2).sum(axis=2)                  # |edge c->c+1|^2
    sq_prev = (e_prev ** 2).sum(axis=2)
    face_area = 0.5 * np.linalg.norm(
        np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0]), axis=1)
    # Voronoi formula: (1/8) * (|v-v_next|^2 cot(angle at prev corner)
    #                           + |v-v_prev|^2 cot(angle at next corner))
    cot_next = np.roll(cot, -1, axis=1)                  # angle at c+1
    cot_prev = np.roll(cot, 1, axis=1)                   # angle at c-1
    voronoi = 0.125 * (sq_next * cot_prev + sq_prev * cot_next)
    obtuse_face = (angles > np.pi / 2).any(axis=1)
    corner_obtuse = angles > np.pi / 2
    mixed = np.where(
        obtuse_face[:, None],
        np.where(corner_obtuse, face_area[:, None] / 2.0, face_area[:, None] / 4.0),
        voronoi,
    )

    a_mixed = np.zeros(nv)
    np.add.at(a_mixed, faces, mixed)

    angle_sum = np.zeros(nv)
    np.add.at(angle_sum, faces, angles)
    referenced = np.zeros(nv, dtype=bool)
    referenced[faces] = True
    defect = np.where(referenced, 2.0 * np.pi - angle_sum, 0.0)

    # cotangent mean-curvature vector: for edge (i, j) opposite corner c,
    # cot(angle at c) * (v_i - v_j) accumulates positively at i, negatively at j
    hvec = np.zeros((nv, 3))
    for c in range(3):
        i = faces[:, (c + 1) % 3]
        j = faces[:, (c + 2) % 3]
        w = cot[:, c][:, None]
        diff = verts[i] - verts[j]
        np.add.at(hvec, i, w * diff)
        np.add.at(hvec, j, -w * diff)

    safe_area = np.where(a_mixed > 0, a_mixed, 1.0)
    k_vec = hvec / (2.0 * safe_area[:, None])
    mean_c = 0.5 * np.linalg.norm(k_vec, axis=1)
    gauss_c = defect / safe_area
    mean_c[~referenced] = 0.0
    gauss_c[~referenced] = 0.0

    # boundary vertices: endpoints of edges with a single incident face
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    uniq, counts = np.unique(und, axis=0, return_counts=True)
    interior = referenced.copy()
    interior[np.unique(uniq[counts == 1])] = False

    return CurvatureField(mean_curvature=mean_c, gaussian_curvature=gauss_c,
                          mixed_area=a_mixed, angle_defect=defect,
                          interior=interior)


def complexity_score(mesh: TriMesh, area_weighted: bool = False) -> float:
    """Mean over vertices of (3/2) k^2 - (1/2) g.

    For a sphere of radius r this is 1/r^2; flat regions contribute ~0.
    Boundary vertices of open meshes are excluded (their angle defect is not
    a curvature).  ``area_weighted=True`` weights vertices by mixed area
    instead of the plain mean.
    """
    field = vertex_curvatures(mesh)
    per_vertex = 1.5 * field.mean_curvature ** 2 - 0.5 * field.gaussian_curvature
    used = field.interior & (field.mixed_area > 0)
    if not used.any():
        raise ValueError("no usable vertices for complexity scoring")
    if area_weighted:
        w = field.mixed_area[used]
        return float((per_vertex[used] * w).sum() / w.sum())
    return float(per_vertex[used].mean())


def partition_corpus(scores, ratios=(6, 3, 1)) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split score indices into (low, middle, high) complexity groups.

    Scores are sorted ascending (stable, so ties keep input order); the top
    ratios[2] fraction becomes the high group, the next ratios[1] the middle,
    and the remainder the low group.  Group boundary counts use round half
    away from zero, with the remainder assigned to low.  Returns index arrays
    in ascending-score order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = len(scores)
    if n < 10:
        raise ValueError(f"need at least 10 scores to partition, got {n}")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ValueError("ratios must be three non-negative numbers")
    total = float(sum(ratios))
    n_high = int(np.floor(n * ratios[2] / total + 0.5))
    n_mid = int(np.floor(n * ratios[1] / total + 0.5))
    n_low = n - n_mid - n_high
    if n_low < 0:
        raise ValueError("rounding produced a negative low-group size")
    order = np.argsort(scores, kind="stable")
    return order[:n_low], order[n_low:n_low + n_mid], order[n_low + n_mid:]
