"""Scan pre-processing: statistical outlier removal, jet de-noising, and
farthest-point resampling, applied in that order by convention.
"""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud, SpatialIndex, fps

__all__ = [
    "remove_statistical_outliers",
    "jet_smooth",
    "resample_fraction",
]


def remove_statistical_outliers(cloud: PointCloud, k: int = 35, alpha: float = 5.0,
                                centered: bool = True) -> PointCloud:
    """Drop points whose mean k-NN distance is anomalously large.

    Per point, d_p = mean distance to its k nearest neighbors; with m and s
    the corpus mean and standard deviation of d_p, a point is removed when
    d_p > m + alpha*s.  ``centered=False`` switches to the bare rule
    d_p > alpha*s, which degenerates on uniform clouds (s -> 0 removes
    everything); the thresholded form is the default for that reason.
    Survivors keep their order and provenance.
    """
    n = len(cloud)
    if n <= k:
        raise ValueError(f"need more than k={k} points, got {n}")
    index = SpatialIndex(cloud.positions)
    idx, dist = index.query(cloud.positions, k + 1)
    # drop each point's own zero-distance entry (first occurrence of self)
    rows = np.arange(n)
    self_col = np.where((idx == rows[:, None]).any(axis=1),
                        (idx == rows[:, None]).argmax(axis=1), 0)
    keep = np.ones((n, k + 1), dtype=bool)
    keep[rows, self_col] = False
    dbar = dist[keep].reshape(n, k).mean(axis=1)

    m = dbar.mean()
    s = dbar.std()
    threshold = m + alpha * s if centered else alpha * s
    survivors = np.where(dbar <= threshold)[0]
    return cloud.take(survivors)


def jet_smooth(cloud: PointCloud, k: int = 18, degree: int = 2) -> PointCloud:
    """Project each point onto a degree-2 polynomial fitted to its
    neighborhood.

    Per point: take the point plus its k nearest neighbors, build a PCA
    frame, least-squares-fit height = poly2(u, v) over the tangent plane, and
    replace the point's height by the fitted value at its own (u, v).  The
    tangent coordinates are kept, so a point never moves farther than its
    neighborhood's height range.  Points whose normal system is
    rank-deficient fall back to plane projection (height 0 in the PCA frame).
    """
    if degree != 2:
        raise ValueError("only degree=2 fitting is supported")
    n = len(cloud)
    if n <= k:
        raise ValueError(f"need more than k={k} points, got {n}")
    index = SpatialIndex(cloud.positions)
    idx, _ = index.query(cloud.positions, k + 1)
    # ensure the point itself participates in its own fit
    rows = np.arange(n)
    has_self = (idx == rows[:, None]).any(axis=1)
    if not has_self.all():
        fix = np.where(~has_self)[0]
        idx[fix, -1] = fix

    nbr = cloud.positions[idx]                      # (n, k+1, 3)
    center = nbr.mean(axis=1, keepdims=True)
    centered = nbr - center
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, evecs = np.linalg.eigh(cov)                  # ascending: normal first
    normal = evecs[:, :, 0]
    tangent = evecs[:, :, [2, 1]]                   # (n, 3, 2), largest two

    uv = np.einsum("nki,nit->nkt", centered, tangent)   # (n, k+1, 2)
    w = np.einsum("nki,ni->nk", centered, normal)       # (n, k+1)

    # precondition: scale tangent coordinates to unit range per neighborhood
    h = np.abs(uv).max(axis=(1, 2))
    h = np.where(h > 0, h, 1.0)
    uvs = uv / h[:, None, None]

    u, v = uvs[..., 0], uvs[..., 1]
    design = np.stack([np.ones_like(u), u, v, u * u, u * v, v * v], axis=2)
    ata = np.einsum("nka,nkb->nab", design, design)
    atb = np.einsum("nka,nk->na", design, w)

    evals = np.linalg.eigvalsh(ata)
    degenerate = evals[:, 0] <= 1e-12 * np.maximum(evals[:, -1], 1e-300)
    safe_ata = ata.copy()
    safe_ata[degenerate] = np.eye(6)
    coef = np.linalg.solve(safe_ata, atb[..., None])[..., 0]

    # own tangent coordinates: position of self within each neighborhood
    self_pos = (idx == rows[:, None]).argmax(axis=1)
    u0 = u[rows, self_pos]
    v0 = v[rows, self_pos]
    phi0 = np.stack([np.ones_like(u0), u0, v0, u0 * u0, u0 * v0, v0 * v0], axis=1)
    w_fit = (coef * phi0).sum(axis=1)
    w_fit[degenerate] = 0.0
    # keep the projection inside the neighborhood's observed height range
    w_fit = np.clip(w_fit, w.min(axis=1), w.max(axis=1))

    base = center[:, 0, :] + u0[:, None] * h[:, None] * tangent[:, :, 0] \
        + v0[:, None] * h[:, None] * tangent[:, :, 1]
    new_pos = base + w_fit[:, None] * normal
    return cloud.with_positions(new_pos)


def resample_fraction(cloud: PointCloud, fraction: float = 0.4,
                      seed_policy: str = "centroid-farthest") -> PointCloud:
    """Keep round(fraction * n) points by farthest point sampling."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    n = len(cloud)
    target = max(1, int(np.floor(fraction * n + 0.5)))
    return fps(cloud, target, seed_policy=seed_policy)
