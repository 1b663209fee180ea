"""Command-line front end.

Subcommands mirror the pipeline stages; everything routes through the
library functions, so CLI runs are exactly as deterministic as the API.
Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .camera import CameraIntrinsics
from .cloud import estimate_normals, fps, orient_normals, random_sample
from .complexity import complexity_score, partition_corpus
from .fileio import load_mesh, load_ply_cloud, save_ply_cloud
from .imperfect import add_noise, add_outliers, severity_preset
from .mesh import normalize, topology_report
from .metrics import evaluate, metric_preset
from .pipeline import PipelineConfig, emit_report, run_pipeline
from .scanner import ViewpointSpec, fuse_views, render_views, sample_viewpoints_object
from .seeding import stage_seed


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="scanbench",
                                  description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version", version=__version__)
    top.add_argument("--seed", type=int, default=0, help="global seed")
    top.add_argument("--threads", type=int, default=1)
    top.add_argument("--config", help="JSON config file (pipeline)")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="topology checks on meshes")
    p.add_argument("meshes", nargs="+")
    p.add_argument("--genus-max", type=int, default=5)

    p = sub.add_parser("complexity", help="curvature complexity scores")
    p.add_argument("meshes", nargs="+")
    p.add_argument("--corpus", action="store_true",
                   help="also partition into high/middle/low groups")
    p.add_argument("--output", help="write CSV here instead of stdout")

    p = sub.add_parser("scan", help="virtual-scan a mesh to a point cloud")
    p.add_argument("mesh")
    p.add_argument("--output", required=True)
    p.add_argument("--mode", choices=("object", "scene"), default="object")
    p.add_argument("--viewpoints", type=int, default=100)
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--budget", type=int, default=120_000)
    p.add_argument("--normals-k", type=int, default=40)

    p = sub.add_parser("perturb", help="degrade a point cloud")
    p.add_argument("cloud")
    p.add_argument("--output", required=True)
    p.add_argument("--kind", required=True,
                   choices=("noise", "outliers", "nonuniform"))
    p.add_argument("--level", choices=("low", "middle", "high"))
    p.add_argument("--mode", choices=("object", "scene"), default="object")
    p.add_argument("--target", type=int,
                   help="nonuniform: number of points to keep")

    p = sub.add_parser("preprocess", help="clean a point cloud")
    p.add_argument("cloud")
    p.add_argument("--output", required=True)
    p.add_argument("--remove-outliers", action="store_true")
    p.add_argument("--smooth", action="store_true")
    p.add_argument("--resample", type=float)

    p = sub.add_parser("eval", help="score a reconstruction against ground truth")
    p.add_argument("recon")
    p.add_argument("gt")
    p.add_argument("--preset", default="object")
    p.add_argument("--gt-cloud", action="store_true",
                   help="ground truth is a point cloud, not a mesh")
    p.add_argument("--nfs-model")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", help="report path (default: stdout)")

    p = sub.add_parser("nfs-train", help="train the patch-feature model")
    p.add_argument("clouds", nargs="+",
                   help="cloud PLYs; the stem before '__' is the surface id")
    p.add_argument("--output", required=True)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--patch-count", type=int, default=64)
    p.add_argument("--patch-size", type=int, default=256)
    p.add_argument("--radius-fraction", type=float, default=0.1)

    p = sub.add_parser("nfs-eval", help="patch-feature similarity of two clouds")
    p.add_argument("model")
    p.add_argument("cloud_p")
    p.add_argument("cloud_q")
    p.add_argument("--patch-count", type=int, default=64)
    p.add_argument("--radius-fraction", type=float, default=0.1)

    p = sub.add_parser("pipeline", help="run the full dataset pipeline")
    p.add_argument("--output-dir", help="override the config's output_dir")

    p = sub.add_parser("report", help="re-emit reports from a manifest")
    p.add_argument("manifest")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", required=True)
    return top


def _cmd_filter(args) -> int:
    for path in args.meshes:
        rep = topology_report(load_mesh(path))
        ok = (rep.watertight and rep.edge_manifold and rep.vertex_manifold
              and rep.genus is not None and rep.genus <= args.genus_max)
        print(f"{path}: watertight={rep.watertight} "
              f"manifold={rep.edge_manifold and rep.vertex_manifold} "
              f"genus={rep.genus} components={rep.component_count} "
              f"-> {'accept' if ok else 'reject'}")
    return 0


def _cmd_complexity(args) -> int:
    scores = []
    for path in args.meshes:
        mesh = normalize(load_mesh(path), mode="object")
        scores.append(complexity_score(mesh))
    lines = []
    if args.corpus:
        lo, mid, hi = partition_corpus(np.asarray(scores))
        group = {}
        for i in hi:
            group[i] = "high"
        for i in mid:
            group[i] = "middle"
        for i in lo:
            group[i] = "low"
        lines.append("mesh,score,group")
        for i, (path, s) in enumerate(zip(args.meshes, scores)):
            lines.append(f"{path},{s!r},{group[i]}")
    else:
        lines.append("mesh,score")
        for path, s in zip(args.meshes, scores):
            lines.append(f"{path},{s!r}")
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_scan(args) -> int:
    mesh = normalize(load_mesh(args.mesh), mode=args.mode)
    spec = ViewpointSpec(count=args.viewpoints,
                         seed=stage_seed(args.seed, "views"))
    poses = sample_viewpoints_object(spec)
    intr = CameraIntrinsics(width=args.image_size, height=args.image_size)
    views = render_views(mesh, poses, intr, threads=args.threads)
    cloud = fuse_views(views, poses)
    if len(cloud) == 0:
        raise ValueError("no surface points scanned; check mesh and viewpoints")
    cloud = fps(cloud, min(args.budget, len(cloud)))
    if len(cloud) > args.normals_k:
        cloud = estimate_normals(cloud, k=args.normals_k)
        cloud = orient_normals(cloud, np.stack([p.position for p in poses]))
    save_ply_cloud(cloud, args.output)
    print(f"{args.output}: {len(cloud)} points from {len(poses)} views")
    return 0


def _cmd_perturb(args) -> int:
    cloud = load_ply_cloud(args.cloud)
    spec = severity_preset(args.kind, args.level, mode=args.mode)
    if args.kind == "noise":
        out = add_noise(cloud, spec.sigma_noise, seed=stage_seed(args.seed, "noise"))
    elif args.kind == "outliers":
        out = add_outliers(cloud, spec.r_outlier, spec.a_outlier, spec.b_outlier,
                           seed=stage_seed(args.seed, "outliers"))
    else:
        if not args.target:
            raise ValueError("nonuniform needs --target")
        out = random_sample(cloud, min(args.target, len(cloud)),
                            seed=stage_seed(args.seed, "rs"))
    save_ply_cloud(out, args.output)
    print(f"{args.output}: {len(out)} points")
    return 0


def _cmd_preprocess(args) -> int:
    from .preprocess import jet_smooth, remove_statistical_outliers, resample_fraction
    cloud = load_ply_cloud(args.cloud)
    if args.remove_outliers:
        cloud = remove_statistical_outliers(cloud)
    if args.smooth:
        cloud = jet_smooth(cloud)
    if args.resample is not None:
        cloud = resample_fraction(cloud, args.resample)
    save_ply_cloud(cloud, args.output)
    print(f"{args.output}: {len(cloud)} points")
    return 0


def _cmd_eval(args) -> int:
    recon = load_mesh(args.recon)
    gt = load_ply_cloud(args.gt) if args.gt_cloud else load_mesh(args.gt)
    nfs_params = None
    if args.nfs_model:
        from .nfs import load_params
        nfs_params = load_params(args.nfs_model)
    rep = evaluate(recon, gt, metric_preset(args.preset), seed=args.seed,
                   nfs_params=nfs_params)
    rep = rep.with_context(mesh_id=os.path.splitext(os.path.basename(args.recon))[0])
    if args.output:
        emit_report([rep], args.format, args.output)
        print(f"wrote {args.output}")
    else:
        print(json.dumps(rep.as_dict(), indent=2))
    return 0


def _surface_id(path: str) -> str:
    stem = os.path.splitext(os.path.basename(path))[0]
    return stem.split("__", 1)[0]


def _cmd_nfs_train(args) -> int:
    from .nfs import TrainConfig, save_params, train_nfs
    corpus = [(_surface_id(p), load_ply_cloud(p)) for p in args.clouds]
    cfg = TrainConfig(epochs=args.epochs, patch_count=args.patch_count,
                      patch_size=args.patch_size,
                      radius_fraction=args.radius_fraction, seed=args.seed)
    params = train_nfs(corpus, cfg)
    save_params(params, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_nfs_eval(args) -> int:
    from .nfs import load_params, nfs
    params = load_params(args.model)
    p = load_ply_cloud(args.cloud_p)
    q = load_ply_cloud(args.cloud_q)
    val = nfs(params, p, q, patch_count=args.patch_count,
              radius_fraction=args.radius_fraction, seed=args.seed)
    print(f"{val!r}")
    return 0


def _cmd_pipeline(args) -> int:
    if not args.config:
        raise ValueError("pipeline needs --config")
    with open(args.config, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if args.output_dir:
        raw["output_dir"] = args.output_dir
    if args.threads != 1:
        raw["threads"] = args.threads
    cfg = PipelineConfig.from_dict(raw)
    manifest = run_pipeline(cfg)
    print(f"{cfg.output_dir}: {len(manifest['artifacts'])} artifacts, "
          f"{len(manifest['rejected'])} rejected")
    return 0


def _cmd_report(args) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    rows = manifest.get("reports", [])
    if not rows:
        raise ValueError("manifest holds no reports")
    from .metrics import MetricReport
    reports = [MetricReport(cd=r["cd"], fscore=r["fscore"],
                            precision=r["precision"], recall=r["recall"],
                            ncs=r["ncs"], nfs=r.get("nfs"),
                            preset=r.get("preset", ""), seed=r.get("seed"),
                            mesh_id=r.get("mesh", ""),
                            challenge=r.get("challenge", ""),
                            severity=r.get("severity") or "")
               for r in rows]
    emit_report(reports, args.format, args.output)
    print(f"wrote {args.output}")
    return 0


_DISPATCH = {
    "filter": _cmd_filter,
    "complexity": _cmd_complexity,
    "scan": _cmd_scan,
    "perturb": _cmd_perturb,
    "preprocess": _cmd_preprocess,
    "eval": _cmd_eval,
    "nfs-train": _cmd_nfs_train,
    "nfs-eval": _cmd_nfs_eval,
    "pipeline": _cmd_pipeline,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
