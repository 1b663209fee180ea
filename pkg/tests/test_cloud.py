import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_cloud
from scanbench.cloud import (PointCloud, SpatialIndex, _fps_brute,
                             _fps_indices, estimate_normals, fps, knn,
                             orient_normals, random_sample)


def _brute_nn(points, queries, k):
    """Reference kNN: full distance matrix, ties broken by ascending index."""
    d = np.linalg.norm(queries[:, None, :] - points[None, :, :], axis=2)
    idx = np.argsort(d, axis=1, kind="stable")[:, :k]
    return idx, np.take_along_axis(d, idx, axis=1)


def test_pointcloud_validation():
    with pytest.raises(ValueError):
        PointCloud(positions=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        PointCloud(positions=np.array([[0.0, 0.0, np.nan]]))
    good = random_cloud(10, 0, with_normals=True, with_views=3)
    taken = good.take([1, 3, 5])
    assert len(taken) == 3
    assert np.array_equal(taken.normals, good.normals[[1, 3, 5]])
    assert np.array_equal(taken.view_index, good.view_index[[1, 3, 5]])


def test_concatenate_preserves_fields():
    a = random_cloud(5, 1, with_normals=True, with_views=2)
    b = random_cloud(7, 2, with_normals=True, with_views=2)
    cat = PointCloud.concatenate([a, b])
    assert len(cat) == 12
    assert np.array_equal(cat.positions[:5], a.positions)
    assert np.array_equal(cat.normals[5:], b.normals)
    # optional fields survive only when present everywhere
    mixed = PointCloud.concatenate([a, random_cloud(3, 3)])
    assert mixed.normals is None and mixed.view_index is None


def test_knn_matches_brute_with_ties():
    r = np.random.default_rng(0)
    # quantized coordinates force many exact distance ties
    pts = r.integers(0, 4, size=(60, 3)).astype(float)
    queries = r.integers(0, 4, size=(25, 3)).astype(float)
    idx = SpatialIndex(pts)
    got_i, got_d = idx.query(queries, k=5)
    exp_i, exp_d = _brute_nn(pts, queries, 5)
    assert np.array_equal(got_i, exp_i)
    assert np.array_equal(got_d, exp_d)


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 10 ** 6), st.integers(5, 80), st.integers(1, 5))
def test_knn_property(seed, n, k):
    r = np.random.default_rng(seed)
    pts = r.normal(size=(n, 3))
    queries = r.normal(size=(12, 3))
    got_i, got_d = SpatialIndex(pts).query(queries, k=k)
    exp_i, exp_d = _brute_nn(pts, queries, k)
    assert np.array_equal(got_i, exp_i)
    assert np.array_equal(got_d, exp_d)


def test_knn_helper_single_query():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
    idx, dist = knn(SpatialIndex(pts), [0.9, 0, 0], 2)
    assert list(idx) == [1, 0]
    assert np.allclose(dist, [0.1, 0.9])


def test_fps_grid_matches_brute():
    r = np.random.default_rng(7)
    pts = r.normal(size=(5000, 3))
    start = 17
    assert np.array_equal(_fps_indices(pts, 600, start),
                          _fps_brute(pts, start, 600))


def test_fps_grid_matches_brute_with_duplicates():
    r = np.random.default_rng(8)
    base = r.normal(size=(400, 3))
    pts = np.vstack([base, base[:200], base[:100]])
    start = 3
    assert np.array_equal(_fps_indices(pts, 350, start),
                          _fps_brute(pts, start, 350))


def test_fps_first_point_policy():
    # seed point = farthest from the centroid, then greedy max-min
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [4, 0, 0], [4.1, 0, 0]])
    cloud = PointCloud(positions=pts)
    out = fps(cloud, 3)
    # centroid ~ (2.275,0,0); farthest is index 0; then 3 (4.1), then 1
    assert np.array_equal(out.positions, pts[[0, 3, 1]])


def test_fps_deterministic_and_subset(sphere4):
    from scanbench.mesh import sample_surface
    cloud = sample_surface(sphere4, 3000, seed=1)
    a = fps(cloud, 200)
    b = fps(cloud, 200)
    assert np.array_equal(a.positions, b.positions)
    # output points are a subset of the input
    din = {tuple(p) for p in cloud.positions}
    assert all(tuple(p) in din for p in a.positions)


def test_random_sample_no_replacement():
    cloud = random_cloud(100, 5)
    out = random_sample(cloud, 40, seed=9)
    assert len(out) == 40
    assert len({tuple(p) for p in out.positions}) == 40
    assert np.array_equal(out.positions,
                          random_sample(cloud, 40, seed=9).positions)
    assert not np.array_equal(out.positions,
                              random_sample(cloud, 40, seed=10).positions)


def test_sample_size_validation():
    cloud = random_cloud(10, 0)
    with pytest.raises(ValueError):
        fps(cloud, 11)
    with pytest.raises(ValueError):
        fps(cloud, 0)
    with pytest.raises(ValueError):
        random_sample(cloud, 11, seed=1)
    assert len(random_sample(cloud, 0, seed=1)) == 0


def test_estimate_normals_plane():
    r = np.random.default_rng(2)
    xy = r.uniform(-1, 1, size=(500, 2))
    pts = np.column_stack([xy, np.zeros(500)])
    cloud = estimate_normals(PointCloud(positions=pts), k=12)
    assert np.allclose(np.abs(cloud.normals[:, 2]), 1.0, atol=1e-9)
    assert np.allclose(np.linalg.norm(cloud.normals, axis=1), 1.0)


def test_estimate_normals_sphere_accuracy(sphere4):
    from scanbench.mesh import sample_surface
    cloud = sample_surface(sphere4, 4000, seed=4)
    est = estimate_normals(cloud, k=20)
    truth = cloud.positions / np.linalg.norm(cloud.positions, axis=1,
                                             keepdims=True)
    dots = np.abs(np.einsum("ij,ij->i", est.normals, truth))
    assert np.median(dots) > 0.999
    assert dots.min() > 0.95


def test_estimate_normals_needs_enough_points():
    with pytest.raises(ValueError):
        estimate_normals(random_cloud(10, 0), k=10)


def test_orient_normals_toward_cameras(sphere4):
    from scanbench.mesh import sample_surface
    cloud = sample_surface(sphere4, 2000, seed=6)
    # two fake views split by hemisphere
    view = (cloud.positions[:, 0] > 0).astype(np.uint32)
    cloud = PointCloud(positions=cloud.positions, view_index=view)
    cloud = estimate_normals(cloud, k=15)
    cams = np.array([[5.0, 0, 0], [-5.0, 0, 0]])
    oriented = orient_normals(cloud, cams)
    to_cam = cams[view] - oriented.positions
    dots = np.einsum("ij,ij->i", oriented.normals, to_cam)
    assert (dots >= 0).all()
    # flipping is the only change: same lines, possibly opposite sign
    assert np.allclose(np.abs(np.einsum("ij,ij->i", oriented.normals,
                                        cloud.normals)), 1.0, atol=1e-12)
