import numpy as np
import pytest

from scanbench.cloud import PointCloud
from scanbench.primitives import box, icosphere


@pytest.fixture(scope="session")
def sphere4():
    """Unit icosphere, subdivision 4 (2562 vertices). Built once; treat as
    read-only."""
    return icosphere(4, radius=1.0)


@pytest.fixture(scope="session")
def unit_box():
    return box((1.0, 1.0, 1.0))


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def random_cloud(n, seed, scale=1.0, with_normals=False, with_views=None):
    """Helper for tests: a reproducible random cloud."""
    r = np.random.default_rng(seed)
    pos = r.normal(scale=scale, size=(n, 3))
    normals = None
    if with_normals:
        normals = r.normal(size=(n, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    view_index = None
    if with_views is not None:
        view_index = r.integers(0, with_views, size=n).astype(np.uint32)
    return PointCloud(positions=pos, normals=normals, view_index=view_index)
