"""Learned patch-feature similarity between point clouds.

A small from-scratch MLP maps canonicalized local patches (centered,
unit-radius, PCA-aligned) to 256-d features.  Training minimizes

    sum over same-surface patch pairs   |cos(f, f') - 1|
  + sum over cross-surface patch pairs  |cos(f, f')|

with plain Adam and analytic gradients; no autograd framework involved.
The evaluation-time score pairs patches between the two clouds by nearest
patch center, in both directions, and averages the feature cosines.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud, SpatialIndex, _fps_indices
from .seeding import rng_for, stage_seed

LEAKY_SLOPE = 0.01
_MAGIC = b"SBNF"
_VERSION = 1


# ---------------------------------------------------------------------------
# patches

@dataclass(frozen=True)
class Patch:
    """Fixed-size local patch in canonical frame.

    points: (m, 3), centroid at origin, max point norm 1, axes = local PCA
    directions with each axis flipped so its third moment is non-negative.
    center: the patch's seed point in the original cloud frame (used for
    nearest-center pairing at evaluation time).
    """

    points: np.ndarray
    center: np.ndarray
    surface: object = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("patch points must be (m, 3)")
        centroid = pts.mean(axis=0)
        if np.max(np.abs(centroid)) > 1e-9:
            raise ValueError("patch centroid not at origin")
        r = np.max(np.linalg.norm(pts, axis=1))
        if abs(r - 1.0) > 1e-9:
            raise ValueError("patch not scaled to unit max radius")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "center",
                           np.asarray(self.center, dtype=np.float64).reshape(3))


def canonicalize_patch(points: np.ndarray, center, surface=None) -> Patch:
    """Center, PCA-align (third-moment sign convention), scale to unit radius."""
    pts = np.asarray(points, dtype=np.float64)
    # sort raw rows first so every accumulation below runs in one fixed
    # order: the result is bitwise invariant to input row permutation
    pts = pts[np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))]
    q = pts - pts.mean(axis=0)
    cov = q.T @ q
    w, vecs = np.linalg.eigh(cov)
    axes = vecs[:, ::-1]  # descending variance
    proj = q @ axes
    third = np.sum(proj ** 3, axis=0)
    flip = np.where(third < 0.0, -1.0, 1.0)
    proj = proj * flip
    r = np.max(np.linalg.norm(proj, axis=1))
    if r < 1e-12:
        raise ValueError("degenerate patch: all points coincide")
    proj = proj / r
    # nudge the centroid back onto the origin; rounding in the mean leaves
    # residue around 1e-17 per step, amplified by 1/r for tiny patches
    proj = proj - proj.mean(axis=0)
    rmax = np.max(np.linalg.norm(proj, axis=1))
    if abs(rmax - 1.0) > 1e-12:
        proj = proj / rmax
    # canonical row order: lexicographic along the PCA axes.  Keeps two
    # resamplings of one patch close in flattened-input space, which the
    # feature trainer depends on.
    order = np.lexsort((proj[:, 2], proj[:, 1], proj[:, 0]))
    return Patch(points=proj[order], center=center, surface=surface)


def extract_patches(cloud: PointCloud, patch_count: int = 64,
                    patch_radius: Optional[float] = None, m: int = 256,
                    seed: int = 0, surface=None,
                    radius_fraction: float = 0.1) -> list:
    """FPS patch centers, then m seeded points within radius around each.

    patch_radius is absolute; when None it defaults to radius_fraction of
    the cloud's bounding-sphere radius (bounding-box circumsphere).  Centers
    whose ball holds fewer than m points are skipped with a warning.
    """
    pos = cloud.positions
    if len(pos) == 0:
        raise ValueError("cannot extract patches from an empty cloud")
    if m < 4:
        raise ValueError("patch size m must be at least 4")
    if patch_radius is None:
        lo, hi = pos.min(axis=0), pos.max(axis=0)
        patch_radius = radius_fraction * (0.5 * float(np.linalg.norm(hi - lo)))
    if not patch_radius > 0:
        raise ValueError("patch radius must be positive")

    n_centers = min(patch_count, len(pos))
    centroid = pos.mean(axis=0)
    start = int(np.argmax(((pos - centroid) ** 2).sum(axis=1)))
    center_idx = _fps_indices(pos, n_centers, start)

    tree = cKDTree(pos)
    patches = []
    skipped = 0
    for k, ci in enumerate(center_idx):
        ball = np.asarray(sorted(tree.query_ball_point(pos[ci], patch_radius)),
                          dtype=np.int64)
        if len(ball) < m:
            skipped += 1
            continue
        rng = rng_for(stage_seed(seed, "patch", k))
        chosen = ball[np.sort(rng.choice(len(ball), size=m, replace=False))]
        try:
            patches.append(canonicalize_patch(pos[chosen], center=pos[ci],
                                              surface=surface))
        except ValueError:
            skipped += 1
    if skipped:
        warnings.warn(f"skipped {skipped} of {len(center_idx)} patches "
                      f"(fewer than {m} points within radius {patch_radius:g})",
                      stacklevel=2)
    return patches


# ---------------------------------------------------------------------------
# MLP

@dataclass
class MlpParams:
    weights: list   # [(out, in) float64]
    biases: list    # [(out,) float64]

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights/biases length mismatch")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i} shape mismatch")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input does not match layer {i-1} output")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite entries")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])

    def flatten(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def init_params(m: int = 256, hidden: int = 256, out_dim: int = 256,
                n_layers: int = 6, seed: int = 0) -> MlpParams:
    """Per-layer uniform init on [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    rng = rng_for(stage_seed(seed, "init"))
    dims = [3 * m] + [hidden] * (n_layers - 1) + [out_dim]
    weights, biases = [], []
    for i in range(n_layers):
        fan_in = dims[i]
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(dims[i + 1], dims[i])))
        biases.append(rng.uniform(-bound, bound, size=dims[i + 1]))
    return MlpParams(weights, biases)


def _forward(params: MlpParams, x: np.ndarray, want_cache: bool = False):
    """x: (batch, input_dim).  Returns features (batch, out_dim) and a cache
    of (activations, pre-activations) for the backward pass."""
    acts = [x]
    pres = []
    h = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pres.append(z)
        h = z if i == last else np.where(z >= 0.0, z, LEAKY_SLOPE * z)
        acts.append(h)
    if want_cache:
        return h, (acts, pres)
    return h


def features(params: MlpParams, patches: Sequence[Patch]) -> np.ndarray:
    """(n_patches, out_dim) feature matrix."""
    if len(patches) == 0:
        raise ValueError("no patches")
    x = np.stack([p.points.ravel() for p in patches])
    if x.shape[1] != params.input_dim:
        raise ValueError(f"patch size {x.shape[1] // 3} does not match "
                         f"model input {params.input_dim // 3}")
    return _forward(params, x)


def feature(params: MlpParams, patch: Patch) -> np.ndarray:
    return features(params, [patch])[0]


def _cosine(f: np.ndarray, i: np.ndarray, j: np.ndarray):
    """Cosine between feature rows i and j, plus the per-row norms."""
    norms = np.linalg.norm(f, axis=1)
    if np.any(norms[i] == 0.0) or np.any(norms[j] == 0.0):
        raise ValueError("degenerate zero feature vector; cosine undefined")
    dots = np.einsum("ij,ij->i", f[i], f[j])
    return dots / (norms[i] * norms[j]), norms


def loss_and_grads(params: MlpParams, x: np.ndarray,
                   pos_pairs: np.ndarray, neg_pairs: np.ndarray):
    """Full training objective and analytic parameter gradients.

    x: (batch, input_dim) flattened canonical patches.
    pos_pairs/neg_pairs: (k, 2) integer rows indexing into x.

    Returns (loss, grad_weights, grad_biases).
    """
    f, (acts, pres) = _forward(params, x, want_cache=True)
    norms = np.linalg.norm(f, axis=1)

    loss = 0.0
    g_f = np.zeros_like(f)

    for pairs, positive in ((pos_pairs, True), (neg_pairs, False)):
        if len(pairs) == 0:
            continue
        i, j = pairs[:, 0], pairs[:, 1]
        cos, _ = _cosine(f, i, j)
        if positive:
            loss += float(np.sum(np.abs(cos - 1.0)))
            dl_dcos = np.sign(cos - 1.0)
        else:
            loss += float(np.sum(np.abs(cos)))
            dl_dcos = np.sign(cos)
        ni, nj = norms[i], norms[j]
        # d cos / d f_i = f_j/(ni*nj) - cos * f_i/ni^2, symmetric in j
        coef = dl_dcos / (ni * nj)
        np.add.at(g_f, i, coef[:, None] * f[j] -
                  (dl_dcos * cos / ni ** 2)[:, None] * f[i])
        np.add.at(g_f, j, coef[:, None] * f[i] -
                  (dl_dcos * cos / nj ** 2)[:, None] * f[j])

    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite training loss: {loss!r}")

    gw = [None] * params.n_layers
    gb = [None] * params.n_layers
    dz = g_f
    last = params.n_layers - 1
    for l in range(last, -1, -1):
        if l != last:
            dz = dz * np.where(pres[l] >= 0.0, 1.0, LEAKY_SLOPE)
        gw[l] = dz.T @ acts[l]
        gb[l] = dz.sum(axis=0)
        if l:
            dz = dz @ params.weights[l]
    return loss, gw, gb


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, arrays: list, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays],
                   beta1=beta1, beta2=beta2, eps=eps)

    def step(self, arrays: list, grads: list, lr: float) -> None:
        """In-place Adam update of arrays given matching grads."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            a -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    halve_every: int = 200
    epochs: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    pairs_per_surface: int = 8
    negative_pairs: int = 32
    patch_count: int = 64
    patch_radius: Optional[float] = None
    radius_fraction: float = 0.1
    patch_size: int = 256
    hidden: int = 256
    out_dim: int = 256
    n_layers: int = 6
    seed: int = 0

    def __post_init__(self):
        for name in ("lr", "halve_every", "epochs", "pairs_per_surface",
                     "negative_pairs", "patch_count", "patch_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def lr_at(self, epoch: int) -> float:
        return self.lr * 0.5 ** (epoch // self.halve_every)


def _match_by_center(patches_a: list, patches_b: list) -> np.ndarray:
    """(len(a), 2) pairs: each a-patch with the b-patch of nearest center."""
    ca = np.stack([p.center for p in patches_a])
    cb = np.stack([p.center for p in patches_b])
    idx = SpatialIndex(cb).query(ca, k=1)[0][:, 0]
    return np.column_stack([np.arange(len(patches_a)), idx])


def train_nfs(corpus: Sequence, cfg: TrainConfig = TrainConfig(),
              loss_history: Optional[list] = None) -> MlpParams:
    """corpus: sequence of (surface_id, PointCloud).

    Positive pairs come from patches of independent samplings of the same
    surface id (corpus entries sharing an id, or a second seeded extraction
    when an id appears once).  Negative pairs cross surface ids.
    """
    if len(corpus) < 2:
        raise ValueError("training corpus needs at least 2 entries")

    # one patch set per entry, plus a re-extraction for lone surfaces
    entries = []  # (surface_id, patches)
    for e, (sid, cloud) in enumerate(corpus):
        patches = extract_patches(cloud, cfg.patch_count, cfg.patch_radius,
                                  cfg.patch_size,
                                  seed=stage_seed(cfg.seed, "extract", e),
                                  surface=sid,
                                  radius_fraction=cfg.radius_fraction)
        if patches:
            entries.append((sid, patches))
    by_sid: dict = {}
    for e, (sid, _) in enumerate(entries):
        by_sid.setdefault(sid, []).append(e)
    for sid, idxs in list(by_sid.items()):
        if len(idxs) == 1:
            e = idxs[0]
            patches = extract_patches(corpus[e][1], cfg.patch_count,
                                      cfg.patch_radius, cfg.patch_size,
                                      seed=stage_seed(cfg.seed, "extract-b", e),
                                      surface=sid,
                                      radius_fraction=cfg.radius_fraction)
            if patches:
                entries.append((sid, patches))
                by_sid[sid].append(len(entries) - 1)

    all_patches = []
    entry_slices = []
    for sid, patches in entries:
        start = len(all_patches)
        all_patches.extend(patches)
        entry_slices.append((sid, start, len(all_patches)))
    if not all_patches:
        raise ValueError("no usable patches extracted from corpus")
    x_all = np.stack([p.points.ravel() for p in all_patches])

    # positive pool: nearest-center matches between entry pairs of one surface
    pos_pool = []
    for sid, idxs in by_sid.items():
        for a, b in zip(idxs[:-1], idxs[1:]):
            pa = entries[a][1]
            pb = entries[b][1]
            local = _match_by_center(pa, pb)
            sa, sb = entry_slices[a][1], entry_slices[b][1]
            pos_pool.append(local + [sa, sb])
    pos_pool = np.concatenate(pos_pool) if pos_pool else np.empty((0, 2), np.int64)

    # negative pool: entry pairs with different surface ids
    neg_entry_pairs = [(a, b)
                       for a in range(len(entries))
                       for b in range(len(entries))
                       if entries[a][0] != entries[b][0] and a < b]

    params = init_params(cfg.patch_size, cfg.hidden, cfg.out_dim,
                         cfg.n_layers, seed=cfg.seed)
    flat = params.flatten()
    adam = AdamState.for_params(flat, cfg.beta1, cfg.beta2, cfg.eps)
    n_surf = len(by_sid)

    for epoch in range(cfg.epochs):
        rng = rng_for(stage_seed(cfg.seed, "epoch", epoch))
        take_pos = min(len(pos_pool), cfg.pairs_per_surface * n_surf)
        if take_pos and take_pos < len(pos_pool):
            sel = np.sort(rng.choice(len(pos_pool), size=take_pos, replace=False))
            pos = pos_pool[sel]
        else:
            pos = pos_pool
        if neg_entry_pairs:
            neg = np.empty((cfg.negative_pairs, 2), dtype=np.int64)
            pick = rng.integers(0, len(neg_entry_pairs), size=cfg.negative_pairs)
            for r, pe in enumerate(pick):
                a, b = neg_entry_pairs[pe]
                sa, ea = entry_slices[a][1], entry_slices[a][2]
                sb, eb = entry_slices[b][1], entry_slices[b][2]
                neg[r, 0] = rng.integers(sa, ea)
                neg[r, 1] = rng.integers(sb, eb)
        else:
            neg = np.empty((0, 2), dtype=np.int64)
        if len(pos) == 0 and len(neg) == 0:
            raise ValueError("no trainable pairs in corpus")

        used = np.unique(np.concatenate([pos.ravel(), neg.ravel()]))
        remap = np.full(len(all_patches), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        loss, gw, gb = loss_and_grads(params, x_all[used],
                                      remap[pos], remap[neg])
        if loss_history is not None:
            loss_history.append(loss)
        grads = []
        for w, b in zip(gw, gb):
            grads.append(w)
            grads.append(b)
        adam.step(flat, grads, cfg.lr_at(epoch))
    return params


# ---------------------------------------------------------------------------
# evaluation

def nfs(params: MlpParams, p: PointCloud, q: PointCloud,
        patch_count: int = 64, patch_radius: Optional[float] = None,
        m: Optional[int] = None, seed: int = 0,
        radius_fraction: float = 0.1) -> float:
    """Mean feature cosine over bidirectional nearest-center patch pairs.

    Both clouds are processed with the same seed, so nfs(P, P) is exactly 1
    and nfs(P, Q) == nfs(Q, P).
    """
    if m is None:
        m = params.input_dim // 3
    pp = extract_patches(p, patch_count, patch_radius, m, seed=seed,
                         radius_fraction=radius_fraction)
    pq = extract_patches(q, patch_count, patch_radius, m, seed=seed,
                         radius_fraction=radius_fraction)
    if not pp or not pq:
        raise ValueError("no patches extracted; radius or density too small")
    fp = features(params, pp)
    fq = features(params, pq)
    np_norm = np.linalg.norm(fp, axis=1)
    nq_norm = np.linalg.norm(fq, axis=1)
    if np.any(np_norm == 0.0) or np.any(nq_norm == 0.0):
        raise ValueError("degenerate zero feature vector; cosine undefined")
    pair_pq = _match_by_center(pp, pq)
    pair_qp = _match_by_center(pq, pp)
    cos_pq = np.einsum("ij,ij->i", fp[pair_pq[:, 0]], fq[pair_pq[:, 1]]) \
        / (np_norm[pair_pq[:, 0]] * nq_norm[pair_pq[:, 1]])
    cos_qp = np.einsum("ij,ij->i", fq[pair_qp[:, 0]], fp[pair_qp[:, 1]]) \
        / (nq_norm[pair_qp[:, 0]] * np_norm[pair_qp[:, 1]])
    total = float(np.sum(cos_pq)) + float(np.sum(cos_qp))
    return total / (len(cos_pq) + len(cos_qp))


# ---------------------------------------------------------------------------
# checkpoints

def save_params(params: MlpParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, params.n_layers))
        for w, b in zip(params.weights, params.biases):
            fh.write(struct.pack("<II", w.shape[0], w.shape[1]))
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path) -> MlpParams:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        version, n_layers = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        weights, biases = [], []
        for _ in range(n_layers):
            out_d, in_d = struct.unpack("<II", fh.read(8))
            w = np.frombuffer(fh.read(8 * out_d * in_d), dtype="<f8")
            weights.append(w.reshape(out_d, in_d).copy())
            biases.append(np.frombuffer(fh.read(8 * out_d), dtype="<f8").copy())
        trailing = fh.read(1)
        if trailing:
            raise ValueError("trailing bytes after checkpoint payload")
    return MlpParams(weights, biases)
