import numpy as np
import pytest

from scanbench.camera import look_at_pose
from scanbench.mesh import (TriMesh, normalize, sample_surface,
                            topology_report, visibility_coverage)
from scanbench.primitives import box, icosphere, plane_grid


def _tet():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriMesh(vertices=v, faces=f)


def test_trimesh_validation():
    v = np.zeros((3, 3))
    with pytest.raises(ValueError):
        TriMesh(vertices=v, faces=np.array([[0, 1, 3]]))  # index out of range
    with pytest.raises(ValueError):
        TriMesh(vertices=v, faces=np.array([[0, 1, 1]]))  # degenerate face


def test_topology_tetrahedron():
    rep = topology_report(_tet())
    assert rep.watertight and rep.edge_manifold and rep.vertex_manifold
    assert rep.genus == 0 and rep.component_count == 1


def test_topology_open_and_nonmanifold():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]],
                 dtype=float)
    open_rep = topology_report(TriMesh(vertices=v[:3], faces=np.array([[0, 1, 2]])))
    assert not open_rep.watertight and open_rep.genus is None
    # three faces share edge (0,1): not edge-manifold
    bad = TriMesh(vertices=v, faces=np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]]))
    rep = topology_report(bad)
    assert not rep.edge_manifold and rep.genus is None


def test_topology_two_components():
    a = icosphere(1)
    b = icosphere(1, radius=0.5)
    verts = np.vstack([a.vertices, b.vertices + 5.0])
    faces = np.vstack([a.faces, b.faces + a.num_vertices])
    rep = topology_report(TriMesh(vertices=verts, faces=faces))
    assert rep.component_count == 2 and rep.watertight and rep.genus == 0


def test_normalize_object_unit_cube_centered():
    m = box((4.0, 2.0, 1.0), center=(10.0, -3.0, 5.0))
    n = normalize(m, mode="object")
    lo, hi = n.bounds()
    assert np.allclose((lo + hi) / 2, 0.0, atol=1e-12)
    # largest half-extent becomes 1: the mesh fits [-1, 1]^3 tightly
    assert np.isclose((hi - lo).max(), 2.0)
    # aspect ratio preserved (uniform scale)
    assert np.allclose((hi - lo), [2.0, 1.0, 0.5])


def test_normalize_scene_keeps_scale():
    m = box((4.0, 2.0, 1.0), center=(10.0, -3.0, 5.0))
    n = normalize(m, mode="scene")
    lo, hi = n.bounds()
    assert np.allclose(hi - lo, [4.0, 2.0, 1.0])
    assert np.allclose(lo, 0.0, atol=1e-12)  # moved to the positive octant


def test_sample_surface_on_mesh_and_deterministic(sphere4):
    c1 = sample_surface(sphere4, 2000, seed=9)
    c2 = sample_surface(sphere4, 2000, seed=9)
    assert np.array_equal(c1.positions, c2.positions)
    assert np.array_equal(c1.face_index, c2.face_index)
    r = np.linalg.norm(c1.positions, axis=1)
    # points lie on the faceted surface, slightly inside the unit sphere
    assert (r <= 1.0 + 1e-12).all() and (r > 0.97).all()
    # area-weighted sampling: on a near-uniform icosphere every octant is hit
    assert len(np.unique(np.sign(c1.positions) @ [1, 2, 4])) == 8


def test_sample_surface_barycentric_consistency(sphere4):
    c = sample_surface(sphere4, 500, seed=3)
    tri = sphere4.vertices[sphere4.faces[c.face_index]]
    # each sample must lie in its face plane
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    d = np.einsum("ij,ij->i", c.positions - tri[:, 0], n)
    assert np.abs(d).max() < 1e-12


def test_visibility_coverage_monotone_in_poses(sphere4):
    poses = [look_at_pose(p, [0, 0, 0]) for p in
             ([3, 0, 0], [-3, 0, 0], [0, 3, 0], [0, -3, 0], [0, 0, 3], [0, 0, -3])]
    cov = [visibility_coverage(sphere4, poses[:k], samples=2000, seed=1)
           for k in range(1, 7)]
    assert all(b >= a for a, b in zip(cov, cov[1:]))
    assert cov[0] < 0.55          # one view sees less than half (plus margin)
    assert cov[-1] > 0.99         # six axis views see nearly everything
    assert visibility_coverage(sphere4, [], samples=100) == 0.0


def test_visibility_occlusion():
    # a big plane hides a small sphere behind it
    sph = icosphere(2, radius=0.3)
    wall_v = np.array([[-5, -5, 1.0], [5, -5, 1.0], [5, 5, 1.0], [-5, 5, 1.0]])
    wall_f = np.array([[0, 1, 2], [0, 2, 3]])
    verts = np.vstack([sph.vertices, wall_v])
    faces = np.vstack([sph.faces, wall_f + sph.num_vertices])
    scene = TriMesh(vertices=verts, faces=faces)
    pose = look_at_pose([0, 0, 4.0], [0, 0, 0])
    cov = visibility_coverage(scene, [pose], samples=3000, seed=2)
    # only the wall's near side is visible; the sphere contributes ~0
    sph_area = sph.area
    wall_area = 200.0
    assert cov < (wall_area / (wall_area + sph_area)) + 0.02


def test_open_mesh_coverage_is_one_sided():
    # every plane_grid face normal points +z, so a camera in front sees all
    # samples and a camera behind sees none
    grid = plane_grid(2.0, divisions=6)
    front = look_at_pose([0, 0, 3.0], [0, 0, 0])
    back = look_at_pose([0, 0, -3.0], [0, 0, 0])
    assert visibility_coverage(grid, [front], samples=1500, seed=0) == 1.0
    assert visibility_coverage(grid, [back], samples=1500, seed=0) == 0.0
