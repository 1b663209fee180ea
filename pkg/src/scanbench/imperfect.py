"""The five scanning-imperfection injectors and their severity presets.

Each injector is pure and seeded: noise (truncated Gaussian point jitter),
outliers (large per-coordinate displacements of a point fraction),
misalignment (random rigid perturbation of each camera pose before fusion),
missing points (band-restricted viewpoints, realized in the scanner), and
non-uniform density (random instead of farthest-point subsampling).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraPose, rot_x, rot_y, rot_z
from .cloud import PointCloud, fps, random_sample

__all__ = [
    "KINDS",
    "ImperfectionSpec",
    "severity_preset",
    "preset_key",
    "parse_preset_key",
    "add_noise",
    "add_outliers",
    "perturb_poses",
    "apply_sampling",
    "truncated_normal",
]

KINDS = ("noise", "nonuniform", "outliers", "misalignment", "missing")
LEVELS = ("low", "middle", "high")


@dataclass(frozen=True)
class ImperfectionSpec:
    """Parameters for one imperfection; unused fields stay at their neutral
    defaults so a spec can be applied blindly by kind."""

    kind: str
    sigma_noise: float = 0.0
    r_outlier: float = 0.0
    a_outlier: float = 0.01
    b_outlier: float = 0.1
    rot_range_deg: tuple[float, float] = (0.0, 0.0)
    trans_range: tuple[float, float] = (0.0, 0.0)
    bands_deg: tuple[tuple[float, float], ...] | None = None
    sampling: str = "FPS"
    target_points: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown imperfection kind {self.kind!r}")
        if self.sigma_noise < 0:
            raise ValueError("sigma_noise must be >= 0")
        if not 0 <= self.r_outlier <= 1:
            raise ValueError("r_outlier must be in [0, 1]")
        if not 0 < self.a_outlier <= self.b_outlier:
            raise ValueError("need 0 < a_outlier <= b_outlier")
        if self.rot_range_deg[0] > self.rot_range_deg[1]:
            raise ValueError("rot_range_deg must be (low, high)")
        if self.trans_range[0] > self.trans_range[1]:
            raise ValueError("trans_range must be (low, high)")
        if self.sampling not in ("FPS", "RS"):
            raise ValueError("sampling must be FPS or RS")


# per-kind severity parameters, object mode ("low", "middle", "high") and the
# single scene severity
_OBJECT_PRESETS = {
    ("noise", "low"): dict(sigma_noise=0.001),
    ("noise", "middle"): dict(sigma_noise=0.003),
    ("noise", "high"): dict(sigma_noise=0.006),
    ("outliers", "low"): dict(r_outlier=0.001, a_outlier=0.01, b_outlier=0.1),
    ("outliers", "middle"): dict(r_outlier=0.003, a_outlier=0.01, b_outlier=0.1),
    ("outliers", "high"): dict(r_outlier=0.006, a_outlier=0.01, b_outlier=0.1),
    ("misalignment", "low"): dict(rot_range_deg=(-0.5, 0.5), trans_range=(-0.005, 0.005)),
    ("misalignment", "middle"): dict(rot_range_deg=(-1.0, 1.0), trans_range=(-0.01, 0.01)),
    ("misalignment", "high"): dict(rot_range_deg=(-2.0, 2.0), trans_range=(-0.02, 0.02)),
    # fewer visible bands = more of the surface missing = higher severity
    ("missing", "low"): dict(bands_deg=((20.0, 3.0), (40.0, 3.0), (60.0, 3.0))),
    ("missing", "middle"): dict(bands_deg=((20.0, 3.0), (40.0, 3.0))),
    ("missing", "high"): dict(bands_deg=((20.0, 3.0),)),
}

_SCENE_PRESETS = {
    "noise": dict(sigma_noise=0.005),
    "outliers": dict(r_outlier=0.004, a_outlier=0.01, b_outlier=0.1),
    "misalignment": dict(rot_range_deg=(-1.5, 1.5), trans_range=(-0.015, 0.015)),
}


def severity_preset(kind: str, level: str | None = None,
                    mode: str = "object") -> ImperfectionSpec:
    """The exact published parameters for (kind, level, mode).

    Object mode takes level in {low, middle, high} except for "nonuniform",
    which has a single variant (level None).  Scene mode has a single
    severity per kind (level None); missing points and non-uniform density
    arise naturally in scene scans and have no preset there.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown imperfection kind {kind!r}")
    if mode == "object":
        if kind == "nonuniform":
            if level is not None:
                raise ValueError("nonuniform has a single variant; level must be omitted")
            return ImperfectionSpec(kind=kind, sampling="RS")
        if level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS} for {kind!r}, got {level!r}")
        return ImperfectionSpec(kind=kind, **_OBJECT_PRESETS[(kind, level)])
    if mode == "scene":
        if level is not None:
            raise ValueError("scene mode has a single severity; level must be omitted")
        if kind not in _SCENE_PRESETS:
            raise ValueError(
                f"{kind!r} has no scene preset (it arises naturally in scene scans)")
        return ImperfectionSpec(kind=kind, **_SCENE_PRESETS[kind])
    raise ValueError(f"unknown mode {mode!r}")


def preset_key(kind: str, level: str | None = None, mode: str = "object") -> str:
    """String form used in CLI/config: "noise:middle", "outliers:scene",
    "nonuniform"."""
    if mode == "scene":
        return f"{kind}:scene"
    return kind if level is None else f"{kind}:{level}"


def parse_preset_key(key: str) -> ImperfectionSpec:
    """Resolve a preset string ("noise:middle", "outliers:scene", "nonuniform",
    "perfect" is not an imperfection and is rejected here)."""
    parts = key.split(":")
    if len(parts) == 1:
        return severity_preset(parts[0], None, "object")
    if len(parts) == 2:
        kind, level = parts
        if level == "scene":
            return severity_preset(kind, None, "scene")
        return severity_preset(kind, level, "object")
    raise ValueError(f"malformed preset key {key!r}")


def truncated_normal(rng: np.random.Generator, sigma: float, size,
                     bound_sigmas: float = 2.0) -> np.ndarray:
    """Draws from N(0, sigma^2) conditioned on |x| <= bound_sigmas * sigma.

    Rejection sampling keeps the exact truncated distribution (clamping would
    pile probability mass at the bounds).
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    out = np.zeros(size, dtype=np.float64)
    if sigma == 0:
        return out
    bound = bound_sigmas * sigma
    out = rng.normal(0.0, sigma, size)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, int(bad.sum()))
        bad = np.abs(out) > bound
    return out


def add_noise(cloud: PointCloud, sigma: float, seed: int) -> PointCloud:
    """Jitter every coordinate by truncated-Gaussian noise (bounds +-2 sigma).

    Count, order, and provenance are preserved; sigma=0 returns the input
    bit-identically.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0 or len(cloud) == 0:
        return cloud
    rng = np.random.default_rng(seed)
    offsets = truncated_normal(rng, sigma, (len(cloud), 3))
    return cloud.with_positions(cloud.positions + offsets)


def add_outliers(cloud: PointCloud, r: float, a: float, b: float, seed: int,
                 sign_mode: str = "per-coordinate") -> PointCloud:
    """Displace round(r*n) distinct points far off the surface.

    Displacement coordinates have magnitudes drawn independently from
    U[a, b]; signs are independent per coordinate by default, or one sign per
    point with sign_mode="per-point".  Undisturbed points stay bit-identical.
    """
    if not 0 <= r <= 1:
        raise ValueError("r must be in [0, 1]")
    if not 0 < a <= b:
        raise ValueError("need 0 < a <= b")
    if sign_mode not in ("per-coordinate", "per-point"):
        raise ValueError(f"unknown sign_mode {sign_mode!r}")
    n = len(cloud)
    m = int(np.floor(r * n + 0.5))  # round half away from zero
    if m == 0:
        return cloud
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=m, replace=False)
    mag = rng.uniform(a, b, (m, 3))
    if sign_mode == "per-coordinate":
        sign = rng.integers(0, 2, (m, 3)) * 2.0 - 1.0
    else:
        sign = np.repeat(rng.integers(0, 2, (m, 1)) * 2.0 - 1.0, 3, axis=1)
    pos = cloud.positions.copy()
    pos[idx] += sign * mag
    return cloud.with_positions(pos)


def perturb_poses(poses: list[CameraPose], rot_range_deg, trans_range,
                  seed: int) -> list[CameraPose]:
    """Rigidly perturb each pose: rotation becomes dR(a, b, g) . R with XYZ
    Euler angles drawn from rot_range_deg (degrees), translation becomes
    t + dt with coordinates drawn from trans_range.

    One pose's draws are consumed in the order a, b, g, dt_x, dt_y, dt_z.
    Zero-width ranges reproduce the input poses exactly.
    """
    rlo, rhi = float(rot_range_deg[0]), float(rot_range_deg[1])
    tlo, thi = float(trans_range[0]), float(trans_range[1])
    if rlo > rhi or tlo > thi:
        raise ValueError("ranges must be (low, high)")
    if rlo == rhi == 0.0 and tlo == thi == 0.0:
        return list(poses)  # guarantees the zero-perturbation path bit-exactly
    rng = np.random.default_rng(seed)
    out = []
    for pose in poses:
        ang = np.deg2rad(rng.uniform(rlo, rhi, 3))
        dt = rng.uniform(tlo, thi, 3)
        drot = rot_x(ang[0]) @ rot_y(ang[1]) @ rot_z(ang[2])
        out.append(CameraPose(rotation=drot @ pose.rotation,
                              translation=pose.translation + dt))
    return out


def apply_sampling(cloud: PointCloud, mode: str, n: int, seed: int) -> PointCloud:
    """Subsample to n points: FPS (uniformity-promoting default) or seeded
    random sampling (the non-uniform-density challenge)."""
    if n > len(cloud):
        raise ValueError(f"cannot sample {n} from {len(cloud)} points")
    if mode == "FPS":
        return fps(cloud, n)
    if mode == "RS":
        return random_sample(cloud, n, seed)
    raise ValueError(f"unknown sampling mode {mode!r}")
