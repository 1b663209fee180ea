"""End-to-end dataset construction: filter, normalize, score, scan, degrade,
pre-process, and (optionally) evaluate, driven by one JSON config.

Every random choice is derived from the global seed through named stage
seeds, so an identical (config, seed) pair regenerates the output tree byte
for byte.  Nothing in the manifest depends on wall-clock time.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .camera import CameraIntrinsics
from .cloud import PointCloud, estimate_normals, orient_normals
from .complexity import complexity_score, partition_corpus
from .fileio import load_mesh, save_ply_cloud, save_ply_mesh
from .imperfect import (ImperfectionSpec, add_noise, add_outliers,
                        perturb_poses, severity_preset)
from .mesh import TriMesh, normalize, topology_report, visibility_coverage
from .metrics import MetricReport, evaluate, metric_preset
from .preprocess import jet_smooth, remove_statistical_outliers, resample_fraction
from .scanner import (ViewpointSpec, fuse_views, render_views,
                      sample_viewpoints_object, sample_viewpoints_scene)
from .seeding import stage_seed

_DEFAULT_BUDGETS = {"low": 80_000, "middle": 120_000, "high": 160_000,
                    "scene": 1_000_000}
_CHALLENGE_KINDS = ("perfect", "noise", "nonuniform", "outliers",
                    "misalignment", "missing")


@dataclass(frozen=True)
class PipelineConfig:
    meshes: tuple
    seed: int
    output_dir: str
    mode: str = "object"
    challenges: tuple = (("perfect", None, None),)  # (kind, level, overrides)
    viewpoint_count: int = 100
    radius_min: float = 2.5
    radius_max: float = 3.5
    cube_size: float = 1.0
    cube_overlap: float = 0.5
    dirs_per_cube: int = 100
    image_size: int = 256
    budgets: tuple = tuple(sorted(_DEFAULT_BUDGETS.items()))
    normals_k: int = 40
    genus_max: int = 5
    coverage_threshold: Optional[float] = None  # None skips the occlusion filter
    coverage_viewpoints: int = 1000
    coverage_samples: int = 10_000
    remove_outliers: bool = False
    smooth: bool = False
    resample: Optional[float] = None
    preset: str = "object"
    reconstructions: tuple = ()  # (mesh_name, recon_path) pairs
    threads: int = 1

    def __post_init__(self):
        # normalize sequence fields so configs built directly compare (and
        # hash) equal to ones round-tripped through from_dict/as_dict
        object.__setattr__(self, "meshes", tuple(str(p) for p in self.meshes))
        object.__setattr__(self, "budgets", tuple(self.budgets))
        object.__setattr__(self, "challenges",
                           tuple(tuple(c) for c in self.challenges))
        object.__setattr__(self, "reconstructions",
                           tuple(tuple(r) for r in self.reconstructions))
        if self.mode not in ("object", "scene"):
            raise ValueError(f"mode must be object or scene, got {self.mode!r}")
        if not self.meshes:
            raise ValueError("config needs at least one input mesh")
        if self.seed is None:
            raise ValueError("config must pin a seed")
        if self.viewpoint_count <= 0:
            raise ValueError("viewpoint_count must be positive")
        if self.image_size <= 0:
            raise ValueError("image_size must be positive")
        if self.normals_k < 0:
            raise ValueError("normals_k must be non-negative")
        for _, v in self.budgets:
            if int(v) <= 0:
                raise ValueError("point budgets must be positive")
        if not self.challenges:
            raise ValueError("config needs at least one challenge")
        for kind, level, overrides in self.challenges:
            if kind not in _CHALLENGE_KINDS:
                raise ValueError(f"unknown challenge kind {kind!r}")
            if kind != "perfect" and overrides is None:
                # resolve now so a bad severity fails before any work
                severity_preset(kind, level, mode=self.mode)
        metric_preset(self.preset)
        if self.resample is not None and not 0 < self.resample <= 1:
            raise ValueError("resample fraction must be in (0, 1]")

    @property
    def budget_map(self) -> dict:
        return {k: int(v) for k, v in self.budgets}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if "seed" not in d:
            raise ValueError("config must pin a seed")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "meshes" in d:
            d["meshes"] = tuple(str(p) for p in d["meshes"])
        if "budgets" in d:
            d["budgets"] = tuple(sorted((str(k), int(v))
                                        for k, v in dict(d["budgets"]).items()))
        if "challenges" in d:
            ch = []
            for entry in d["challenges"]:
                if isinstance(entry, str):
                    kind, _, level = entry.partition(":")
                    ch.append((kind, level or None, None))
                else:
                    entry = dict(entry)
                    overrides = entry.get("params")
                    if overrides is not None:
                        overrides = tuple(sorted(overrides.items()))
                    ch.append((entry["kind"], entry.get("level"), overrides))
            d["challenges"] = tuple(ch)
        if "reconstructions" in d:
            d["reconstructions"] = tuple(sorted(dict(d["reconstructions"]).items()))
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def as_dict(self) -> dict:
        return {
            "meshes": list(self.meshes),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "mode": self.mode,
            "challenges": [{"kind": k, "level": lv,
                            "params": dict(ov) if ov else None}
                           for k, lv, ov in self.challenges],
            "viewpoint_count": self.viewpoint_count,
            "radius_min": self.radius_min,
            "radius_max": self.radius_max,
            "cube_size": self.cube_size,
            "cube_overlap": self.cube_overlap,
            "dirs_per_cube": self.dirs_per_cube,
            "image_size": self.image_size,
            "budgets": dict(self.budgets),
            "normals_k": self.normals_k,
            "genus_max": self.genus_max,
            "coverage_threshold": self.coverage_threshold,
            "coverage_viewpoints": self.coverage_viewpoints,
            "coverage_samples": self.coverage_samples,
            "remove_outliers": self.remove_outliers,
            "smooth": self.smooth,
            "resample": self.resample,
            "preset": self.preset,
            "reconstructions": dict(self.reconstructions),
            "threads": self.threads,
        }


def _challenge_key(kind: str, level, overrides) -> str:
    if kind == "perfect":
        return "perfect"
    key = kind if level is None else f"{kind}-{level}"
    if overrides:
        key += "-custom"
    return key


def _resolve_spec(kind: str, level, overrides, mode: str) -> ImperfectionSpec:
    if overrides is None:
        return severity_preset(kind, level, mode=mode)
    base = severity_preset(kind, level, mode=mode) if level is not None else None
    kw = dict(overrides)
    if base is not None:
        merged = {f: getattr(base, f) for f in base.__dataclass_fields__}
        merged.update(kw)
        kw = merged
    kw["kind"] = kind
    kw.setdefault("sampling", "RS" if kind == "nonuniform" else "FPS")
    return ImperfectionSpec(**kw)


def _spec_params(spec: Optional[ImperfectionSpec]) -> dict:
    if spec is None:
        return {}
    return {
        "sigma_noise": spec.sigma_noise,
        "r_outlier": spec.r_outlier,
        "a_outlier": spec.a_outlier,
        "b_outlier": spec.b_outlier,
        "rot_range_deg": list(spec.rot_range_deg),
        "trans_range": list(spec.trans_range),
        "bands_deg": [list(b) for b in spec.bands_deg] if spec.bands_deg else None,
        "sampling": spec.sampling,
    }


def _mesh_names(paths) -> list:
    names = []
    seen = {}
    for p in paths:
        stem = os.path.splitext(os.path.basename(str(p)))[0]
        if stem in seen:
            seen[stem] += 1
            stem = f"{stem}-{seen[stem]}"
        else:
            seen[stem] = 0
        names.append(stem)
    return names


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute the stage graph and return the manifest (also written to
    ``output_dir/manifest.json``)."""
    # fail before any output exists
    missing = [p for p in config.meshes if not os.path.isfile(p)]
    missing += [p for _, p in config.reconstructions if not os.path.isfile(p)]
    if missing:
        raise FileNotFoundError(f"missing input files: {missing}")

    names = _mesh_names(config.meshes)
    loaded = [(n, p, load_mesh(p)) for n, p in zip(names, config.meshes)]

    # topology / occlusion filter
    accepted = []
    rejected = []
    for name, path, mesh in loaded:
        rep = topology_report(mesh)
        if not rep.watertight:
            rejected.append({"mesh": name, "source": str(path),
                             "reason": "not watertight"})
            continue
        if not (rep.edge_manifold and rep.vertex_manifold):
            rejected.append({"mesh": name, "source": str(path),
                             "reason": "not 2-manifold"})
            continue
        if rep.genus is not None and rep.genus > config.genus_max:
            rejected.append({"mesh": name, "source": str(path),
                             "reason": f"genus {rep.genus} > {config.genus_max}"})
            continue
        accepted.append((name, path, normalize(mesh, mode=config.mode)))

    if config.coverage_threshold is not None:
        kept = []
        for name, path, mesh in accepted:
            spec = ViewpointSpec(count=config.coverage_viewpoints,
                                 radius_min=config.radius_min,
                                 radius_max=config.radius_max,
                                 seed=stage_seed(config.seed, "coverage", name))
            poses = sample_viewpoints_object(spec)
            cov = visibility_coverage(mesh, poses, config.coverage_samples,
                                      seed=stage_seed(config.seed, "coverage-pts", name))
            if cov < config.coverage_threshold:
                rejected.append({"mesh": name, "source": str(path),
                                 "reason": f"self-occlusion: coverage {cov:.4f} "
                                           f"< {config.coverage_threshold}"})
            else:
                kept.append((name, path, mesh))
        accepted = kept

    # complexity grouping
    budget_map = config.budget_map
    groups = {}
    scores = {}
    if config.mode == "scene":
        for name, _, mesh in accepted:
            groups[name] = "scene"
            scores[name] = None
    else:
        vals = []
        for name, _, mesh in accepted:
            s = complexity_score(mesh)
            scores[name] = s
            vals.append(s)
        if len(vals) >= 10:
            lo, mid, hi = partition_corpus(np.asarray(vals))
            names_a = [a[0] for a in accepted]
            for i in hi:
                groups[names_a[i]] = "high"
            for i in mid:
                groups[names_a[i]] = "middle"
            for i in lo:
                groups[names_a[i]] = "low"
        else:
            for name, _, _ in accepted:
                groups[name] = "middle"

    os.makedirs(config.output_dir, exist_ok=True)
    cloud_dir = os.path.join(config.output_dir, "clouds")
    gt_dir = os.path.join(config.output_dir, "gt")
    os.makedirs(cloud_dir, exist_ok=True)
    os.makedirs(gt_dir, exist_ok=True)

    intr = CameraIntrinsics(width=config.image_size, height=config.image_size)
    artifacts = []
    reports = []
    recon_map = dict(config.reconstructions)

    for name, path, mesh in accepted:
        mesh_seed = stage_seed(config.seed, "mesh", name)
        gt_rel = os.path.join("gt", f"{name}.ply")
        save_ply_mesh(mesh, os.path.join(config.output_dir, gt_rel))

        if config.mode == "object":
            vspec = ViewpointSpec(count=config.viewpoint_count,
                                  radius_min=config.radius_min,
                                  radius_max=config.radius_max,
                                  seed=stage_seed(mesh_seed, "views"))
            poses = sample_viewpoints_object(vspec)
        else:
            poses = sample_viewpoints_scene(mesh, cube_size=config.cube_size,
                                            overlap=config.cube_overlap,
                                            dirs_per_cube=config.dirs_per_cube,
                                            seed=stage_seed(mesh_seed, "views"))
        views = render_views(mesh, poses, intr, threads=config.threads)
        base = fuse_views(views, poses)
        budget = budget_map["scene" if config.mode == "scene" else groups[name]]

        for kind, level, overrides in config.challenges:
            key = _challenge_key(kind, level, overrides)
            ch_seed = stage_seed(mesh_seed, "challenge", key)
            spec = None if kind == "perfect" else _resolve_spec(
                kind, level, overrides, config.mode)

            used_poses = poses
            if kind == "missing":
                mspec = ViewpointSpec(count=config.viewpoint_count,
                                      radius_min=config.radius_min,
                                      radius_max=config.radius_max,
                                      bands_deg=spec.bands_deg,
                                      seed=stage_seed(mesh_seed, "views-missing", key))
                used_poses = sample_viewpoints_object(mspec)
                mviews = render_views(mesh, used_poses, intr,
                                      threads=config.threads)
                cloud = fuse_views(mviews, used_poses)
            elif kind == "misalignment":
                used_poses = perturb_poses(poses, spec.rot_range_deg,
                                           spec.trans_range,
                                           seed=stage_seed(ch_seed, "poses"))
                cloud = fuse_views(views, used_poses)
            else:
                cloud = base

            sampling = "RS" if kind == "nonuniform" else "FPS"
            n_target = min(budget, len(cloud))
            if n_target == 0:
                rejected.append({"mesh": name, "source": str(path),
                                 "reason": f"challenge {key}: no points scanned"})
                continue
            if sampling == "FPS":
                from .cloud import fps
                cloud = fps(cloud, n_target)
            else:
                from .cloud import random_sample
                cloud = random_sample(cloud, n_target,
                                      seed=stage_seed(ch_seed, "rs"))

            if spec is not None and spec.sigma_noise > 0:
                cloud = add_noise(cloud, spec.sigma_noise,
                                  seed=stage_seed(ch_seed, "noise"))
            if spec is not None and spec.r_outlier > 0:
                cloud = add_outliers(cloud, spec.r_outlier, spec.a_outlier,
                                     spec.b_outlier,
                                     seed=stage_seed(ch_seed, "outliers"))

            if len(cloud) > config.normals_k:
                cloud = estimate_normals(cloud, k=config.normals_k)
                cam_pos = np.stack([p.position for p in used_poses])
                cloud = orient_normals(cloud, cam_pos)

            steps = []
            if config.remove_outliers:
                cloud = remove_statistical_outliers(cloud)
                steps.append("outlier-removal")
            if config.smooth:
                cloud = jet_smooth(cloud)
                steps.append("jet-smoothing")
            if config.resample is not None:
                cloud = resample_fraction(cloud, config.resample)
                steps.append(f"resample-{config.resample}")

            rel = os.path.join("clouds", f"{name}__{key}.ply")
            save_ply_cloud(cloud, os.path.join(config.output_dir, rel))
            artifacts.append({
                "mesh": name,
                "source": str(path),
                "gt": gt_rel,
                "complexity_score": scores[name],
                "group": groups[name],
                "challenge": kind,
                "severity": level,
                "params": _spec_params(spec),
                "sampling": sampling,
                "points": len(cloud),
                "budget": budget,
                "preprocess": steps,
                "seed": ch_seed,
                "path": rel,
            })

        if name in recon_map:
            recon = load_mesh(recon_map[name])
            rep = evaluate(recon, mesh, metric_preset(config.preset),
                           seed=stage_seed(mesh_seed, "eval"))
            reports.append(rep.with_context(mesh_id=name, challenge="eval",
                                            severity=""))

    manifest = {
        "tool_version": __version__,
        "config": config.as_dict(),
        "rejected": rejected,
        "artifacts": artifacts,
        "reports": [r.as_dict() for r in reports],
    }
    with open(os.path.join(config.output_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if reports:
        emit_report(reports, "csv", os.path.join(config.output_dir, "reports.csv"))
    return manifest


_REPORT_COLUMNS = ("mesh", "challenge", "severity", "cd", "fscore",
                   "precision", "recall", "ncs", "nfs", "preset", "seed")


def emit_report(reports, fmt: str, path) -> None:
    """Write metric reports as CSV or JSON with a fixed column set.

    A missing nfs value stays empty (CSV) or null (JSON), never 0.
    """
    if not reports:
        raise ValueError("no reports to emit")
    rows = [r.as_dict() for r in reports]
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=_REPORT_COLUMNS,
                               extrasaction="ignore")
            w.writeheader()
            for row in rows:
                out = dict(row)
                if out.get("nfs") is None:
                    out["nfs"] = ""
                w.writerow(out)
    elif fmt == "json":
        payload = [{k: row.get(k) for k in _REPORT_COLUMNS} for row in rows]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def load_report(path) -> list:
    """Read back an emitted JSON report as MetricReport objects."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    out = []
    for row in payload:
        out.append(MetricReport(
            cd=row["cd"], fscore=row["fscore"], precision=row["precision"],
            recall=row["recall"], ncs=row["ncs"], nfs=row.get("nfs"),
            preset=row.get("preset", ""), seed=row.get("seed"),
            mesh_id=row.get("mesh", ""), challenge=row.get("challenge", ""),
            severity=row.get("severity", "")))
    return out
