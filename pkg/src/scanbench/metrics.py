"""Surface-reconstruction evaluation metrics.

Chamfer distance, F-score (precision/recall at a distance threshold), and
normal consistency computed between two point clouds with exact nearest
neighbors.  ``evaluate`` wraps them for mesh-vs-mesh comparison under a
named preset; ground truth may also be a raw point cloud, in which case
normal consistency falls back to estimated normals and the report says so.

All distances are recomputed from coordinates with ``np.linalg.norm`` after
the tree query so results match a brute-force evaluation bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .cloud import PointCloud, SpatialIndex, estimate_normals
from .mesh import TriMesh, sample_surface
from .seeding import stage_seed


@dataclass(frozen=True)
class MetricPreset:
    label: str
    n_p: Optional[int]  # None: use the ground-truth cloud's size
    n_q: Optional[int]
    tau: float
    norm_ord: float = 2.0

    def __post_init__(self):
        if self.n_p != self.n_q:
            raise ValueError("presets use equal sample counts for both clouds")
        if self.n_p is not None and self.n_p <= 0:
            raise ValueError("sample count must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")


_PRESETS = {
    "object": MetricPreset("object", 200_000, 200_000, 0.005),
    "scene": MetricPreset("scene", 1_500_000, 1_500_000, 0.03),
    "real": MetricPreset("real", None, None, 0.5),
}


def metric_preset(label: str) -> MetricPreset:
    try:
        return _PRESETS[label]
    except KeyError:
        raise ValueError(f"unknown metric preset {label!r}; "
                         f"expected one of {sorted(_PRESETS)}") from None


@dataclass(frozen=True)
class MetricReport:
    cd: float
    fscore: float       # percent
    precision: float    # fraction
    recall: float       # fraction
    ncs: float
    nfs: Optional[float] = None
    preset: str = ""
    seed: Optional[int] = None
    mesh_id: str = ""
    challenge: str = ""
    severity: str = ""
    degraded_ncs: bool = False  # ncs used estimated instead of face normals

    def __post_init__(self):
        if self.precision > 0 and self.recall > 0:
            want = 200.0 * self.precision * self.recall / (self.precision + self.recall)
        else:
            want = 0.0
        if abs(self.fscore - want) > 1e-9:
            raise ValueError("fscore inconsistent with precision/recall")

    def as_dict(self) -> dict:
        return {
            "mesh": self.mesh_id,
            "challenge": self.challenge,
            "severity": self.severity,
            "cd": self.cd,
            "fscore": self.fscore,
            "precision": self.precision,
            "recall": self.recall,
            "ncs": self.ncs,
            "nfs": self.nfs,
            "preset": self.preset,
            "seed": self.seed,
        }

    def with_context(self, mesh_id=None, challenge=None, severity=None) -> "MetricReport":
        kw = {}
        if mesh_id is not None:
            kw["mesh_id"] = mesh_id
        if challenge is not None:
            kw["challenge"] = challenge
        if severity is not None:
            kw["severity"] = severity
        return replace(self, **kw)


def _check_nonempty(*clouds):
    for c in clouds:
        if len(c.positions) == 0:
            raise ValueError("metric requires non-empty point clouds")


def _nn_dist(src: np.ndarray, index: SpatialIndex, ord: float = 2.0) -> np.ndarray:
    """Distance from each src point to its nearest neighbor in the index,
    recomputed from coordinates so it is bitwise-stable."""
    idx = index.query(src, k=1)[0][:, 0]
    diff = src - index.positions[idx]
    if ord == 2.0:
        return np.linalg.norm(diff, axis=1)
    return np.linalg.norm(diff, ord=ord, axis=1)


def chamfer(p: PointCloud, q: PointCloud, norm_ord: float = 2.0) -> float:
    _check_nonempty(p, q)
    iq = SpatialIndex(q.positions)
    ip = SpatialIndex(p.positions)
    d_pq = _nn_dist(p.positions, iq, norm_ord)
    d_qp = _nn_dist(q.positions, ip, norm_ord)
    return 0.5 * float(np.mean(d_pq)) + 0.5 * float(np.mean(d_qp))


def fscore(p: PointCloud, q: PointCloud, tau: float,
           norm_ord: float = 2.0) -> tuple:
    """Returns (fscore_percent, precision, recall).

    precision: fraction of p within tau of q (strict <); recall: the reverse.
    """
    _check_nonempty(p, q)
    if not tau > 0:
        raise ValueError("tau must be positive")
    d_pq = _nn_dist(p.positions, SpatialIndex(q.positions), norm_ord)
    d_qp = _nn_dist(q.positions, SpatialIndex(p.positions), norm_ord)
    precision = float(np.count_nonzero(d_pq < tau)) / len(d_pq)
    recall = float(np.count_nonzero(d_qp < tau)) / len(d_qp)
    if precision + recall > 0:
        f = 200.0 * precision * recall / (precision + recall)
    else:
        f = 0.0
    return f, precision, recall


def _ncs_normals(positions_p, normals_p, positions_q, normals_q) -> float:
    ip = SpatialIndex(positions_p)
    iq = SpatialIndex(positions_q)
    nn_pq = iq.query(positions_p, k=1)[0][:, 0]
    nn_qp = ip.query(positions_q, k=1)[0][:, 0]
    dot_pq = np.abs(np.einsum("ij,ij->i", normals_p, normals_q[nn_pq]))
    dot_qp = np.abs(np.einsum("ij,ij->i", normals_q, normals_p[nn_qp]))
    return 0.5 * float(np.mean(dot_pq)) + 0.5 * float(np.mean(dot_qp))


def ncs(p: PointCloud, q: PointCloud) -> float:
    """Normal consistency from face-provenance normals; symmetric, in [0,1]."""
    _check_nonempty(p, q)
    if p.face_normals is None or q.face_normals is None:
        raise ValueError("ncs requires face-provenance normals on both clouds")
    return _ncs_normals(p.positions, p.face_normals, q.positions, q.face_normals)


def evaluate(recon: TriMesh, gt: Union[TriMesh, PointCloud],
             preset: MetricPreset, seed: int,
             nfs_params=None, nfs_options: Optional[dict] = None) -> MetricReport:
    """Sample both surfaces and compute the full metric suite.

    gt may be a point cloud (real scans); normal consistency then uses
    estimated normals on the gt side and the report flags it as degraded.
    """
    gt_is_cloud = isinstance(gt, PointCloud)
    n = preset.n_p
    if n is None:
        if not gt_is_cloud:
            raise ValueError(f"preset {preset.label!r} takes its sample count "
                             "from a ground-truth point cloud")
        n = len(gt.positions)
        if n == 0:
            raise ValueError("empty ground-truth cloud")

    cloud_p = sample_surface(recon, n, seed=stage_seed(seed, "metrics", "P"))

    degraded = False
    if gt_is_cloud:
        cloud_q = gt
        if len(cloud_q.positions) > n:
            rng = np.random.default_rng(stage_seed(seed, "metrics", "Q"))
            keep = np.sort(rng.choice(len(cloud_q.positions), size=n, replace=False))
            cloud_q = cloud_q.take(keep)
        if cloud_q.face_normals is None:
            degraded = True
            normals_q = cloud_q.normals
            if normals_q is None:
                normals_q = estimate_normals(cloud_q, k=min(40, len(cloud_q.positions))).normals
        else:
            normals_q = cloud_q.face_normals
    else:
        cloud_q = sample_surface(gt, n, seed=stage_seed(seed, "metrics", "Q"))
        normals_q = cloud_q.face_normals

    cd = chamfer(cloud_p, cloud_q, preset.norm_ord)
    f, prec, rec = fscore(cloud_p, cloud_q, preset.tau, preset.norm_ord)
    ncs_val = _ncs_normals(cloud_p.positions, cloud_p.face_normals,
                           cloud_q.positions, normals_q)

    nfs_val = None
    if nfs_params is not None:
        from . import nfs as _nfs
        opts = dict(nfs_options or {})
        nfs_val = _nfs.nfs(nfs_params, cloud_p, cloud_q,
                           seed=stage_seed(seed, "metrics", "nfs"), **opts)

    return MetricReport(cd=cd, fscore=f, precision=prec, recall=rec,
                        ncs=ncs_val, nfs=nfs_val, preset=preset.label,
                        seed=seed, degraded_ncs=degraded)
