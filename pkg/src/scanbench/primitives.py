"""Procedural test meshes.

Deterministic constructors for the shapes used throughout the test suite and
examples: icosphere, uv sphere, cylinder, torus, box, and an open plane grid.
All closed shapes are watertight, consistently outward-oriented 2-manifolds.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh

__all__ = ["icosphere", "uv_sphere", "cylinder", "torus", "box", "plane_grid"]


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Subdivided icosahedron with near-uniform triangles.

    Each subdivision level quadruples the face count: level 0 has 20 faces,
    level 4 has 5120.
    """
    if subdivisions < 0:
        raise ValueError("subdivisions must be non-negative")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)

    for _ in range(subdivisions):
        edge_mid: dict[tuple[int, int], int] = {}
        new_verts = [verts]
        next_id = len(verts)

        def midpoint(a: int, b: int) -> int:
            nonlocal next_id
            key = (a, b) if a < b else (b, a)
            if key in edge_mid:
                return edge_mid[key]
            m = verts[a] + verts[b]
            m /= np.linalg.norm(m)
            new_verts.append(m[None, :])
            edge_mid[key] = next_id
            next_id += 1
            return edge_mid[key]

        new_faces = []
        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        verts = np.concatenate(new_verts, axis=0)
        faces = np.asarray(new_faces, dtype=np.int64)

    return TriMesh(vertices=verts * radius, faces=faces)


def uv_sphere(radius: float = 1.0, rings: int = 16, segments: int = 32) -> TriMesh:
    """Latitude/longitude sphere; poles are triangle fans."""
    if rings < 2 or segments < 3:
        raise ValueError("need rings >= 2 and segments >= 3")
    verts = [np.array([0.0, 0.0, radius])]
    for i in range(1, rings):
        theta = np.pi * i / rings
        for j in range(segments):
            phi = 2 * np.pi * j / segments
            verts.append(radius * np.array([
                np.sin(theta) * np.cos(phi),
                np.sin(theta) * np.sin(phi),
                np.cos(theta),
            ]))
    verts.append(np.array([0.0, 0.0, -radius]))
    south = len(verts) - 1

    def ring_vertex(i: int, j: int) -> int:
        return 1 + (i - 1) * segments + (j % segments)

    faces = []
    for j in range(segments):
        faces.append([0, ring_vertex(1, j), ring_vertex(1, j + 1)])
    for i in range(1, rings - 1):
        for j in range(segments):
            a = ring_vertex(i, j)
            b = ring_vertex(i, j + 1)
            c = ring_vertex(i + 1, j)
            d = ring_vertex(i + 1, j + 1)
            faces.append([a, c, b])
            faces.append([b, c, d])
    for j in range(segments):
        faces.append([south, ring_vertex(rings - 1, j + 1), ring_vertex(rings - 1, j)])
    return TriMesh(vertices=np.asarray(verts), faces=np.asarray(faces, dtype=np.int64))


def cylinder(radius: float = 1.0, height: float = 2.0, segments: int = 48,
             height_segments: int = 8) -> TriMesh:
    """Closed cylinder along z, centered at the origin, fan caps."""
    if segments < 3 or height_segments < 1:
        raise ValueError("need segments >= 3 and height_segments >= 1")
    zs = np.linspace(-height / 2.0, height / 2.0, height_segments + 1)
    verts = []
    for z in zs:
        for j in range(segments):
            phi = 2 * np.pi * j / segments
            verts.append([radius * np.cos(phi), radius * np.sin(phi), z])
    top_center = len(verts)
    verts.append([0.0, 0.0, height / 2.0])
    bot_center = len(verts)
    verts.append([0.0, 0.0, -height / 2.0])

    def vid(i: int, j: int) -> int:
        return i * segments + (j % segments)

    faces = []
    for i in range(height_segments):
        for j in range(segments):
            a = vid(i, j)
            b = vid(i, j + 1)
            c = vid(i + 1, j)
            d = vid(i + 1, j + 1)
            faces.append([a, b, c])
            faces.append([b, d, c])
    top = height_segments
    for j in range(segments):
        faces.append([top_center, vid(top, j), vid(top, j + 1)])
        faces.append([bot_center, vid(0, j + 1), vid(0, j)])
    return TriMesh(vertices=np.asarray(verts, dtype=np.float64),
                   faces=np.asarray(faces, dtype=np.int64))


def torus(major_radius: float = 2.0, minor_radius: float = 0.7,
          major_segments: int = 48, minor_segments: int = 24) -> TriMesh:
    """Torus around the z axis (genus 1)."""
    if major_segments < 3 or minor_segments < 3:
        raise ValueError("need at least 3 segments on both loops")
    if not 0 < minor_radius < major_radius:
        raise ValueError("need 0 < minor_radius < major_radius")
    verts = []
    for i in range(major_segments):
        u = 2 * np.pi * i / major_segments
        cu, su = np.cos(u), np.sin(u)
        for j in range(minor_segments):
            v = 2 * np.pi * j / minor_segments
            r = major_radius + minor_radius * np.cos(v)
            verts.append([r * cu, r * su, minor_radius * np.sin(v)])

    def vid(i: int, j: int) -> int:
        return (i % major_segments) * minor_segments + (j % minor_segments)

    faces = []
    for i in range(major_segments):
        for j in range(minor_segments):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i, j + 1)
            d = vid(i + 1, j + 1)
            faces.append([a, b, c])
            faces.append([b, d, c])
    return TriMesh(vertices=np.asarray(verts, dtype=np.float64),
                   faces=np.asarray(faces, dtype=np.int64))


def box(size=(2.0, 2.0, 2.0), center=(0.0, 0.0, 0.0), inward: bool = False) -> TriMesh:
    """Axis-aligned box of 12 triangles; inward=True flips the orientation
    (a room shell seen from inside)."""
    sx, sy, sz = np.broadcast_to(np.asarray(size, dtype=np.float64), 3) / 2.0
    cx, cy, cz = center
    verts = np.array([
        [cx - sx, cy - sy, cz - sz], [cx + sx, cy - sy, cz - sz],
        [cx + sx, cy + sy, cz - sz], [cx - sx, cy + sy, cz - sz],
        [cx - sx, cy - sy, cz + sz], [cx + sx, cy - sy, cz + sz],
        [cx + sx, cy + sy, cz + sz], [cx - sx, cy + sy, cz + sz],
    ])
    quads = [
        [0, 3, 2, 1],  # bottom (z-)
        [4, 5, 6, 7],  # top (z+)
        [0, 1, 5, 4],  # y-
        [2, 3, 7, 6],  # y+
        [1, 2, 6, 5],  # x+
        [3, 0, 4, 7],  # x-
    ]
    faces = []
    for q in quads:
        faces.append([q[0], q[1], q[2]])
        faces.append([q[0], q[2], q[3]])
    faces = np.asarray(faces, dtype=np.int64)
    if inward:
        faces = faces[:, ::-1]
    return TriMesh(vertices=verts, faces=faces)


def plane_grid(size: float = 2.0, divisions: int = 8, z: float = 0.0) -> TriMesh:
    """Open square grid in the z plane (has boundary; not watertight)."""
    if divisions < 1:
        raise ValueError("divisions must be >= 1")
    coords = np.linspace(-size / 2.0, size / 2.0, divisions + 1)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    verts = np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, z)], axis=1)

    def vid(i: int, j: int) -> int:
        return i * (divisions + 1) + j

    faces = []
    for i in range(divisions):
        for j in range(divisions):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i, j + 1)
            d = vid(i + 1, j + 1)
            faces.append([a, b, c])
            faces.append([b, d, c])
    return TriMesh(vertices=verts, faces=np.asarray(faces, dtype=np.int64))
