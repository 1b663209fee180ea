"""Synthetic scan benchmark toolkit.

Builds realistically imperfect point-cloud scans from triangle meshes,
groups surfaces by curvature complexity, pre-processes scans, and scores
reconstructed surfaces against ground truth.
"""

__version__ = "0.1.0"

from .camera import CameraIntrinsics, CameraPose, look_at_pose
from .cloud import (PointCloud, SpatialIndex, estimate_normals, fps, knn,
                    orient_normals, random_sample)
from .complexity import (CurvatureField, complexity_score, partition_corpus,
                         vertex_curvatures)
from .fileio import (load_mesh, load_obj, load_ply_cloud, load_ply_mesh,
                     save_mesh, save_obj, save_ply_cloud, save_ply_mesh)
from .imperfect import (ImperfectionSpec, add_noise, add_outliers,
                        apply_sampling, perturb_poses, preset_key,
                        severity_preset, truncated_normal)
from .mesh import (TopologyReport, TriMesh, normalize, sample_surface,
                   topology_report, visibility_coverage)
from .metrics import (MetricPreset, MetricReport, chamfer, evaluate, fscore,
                      metric_preset, ncs)
from .nfs import (MlpParams, Patch, TrainConfig, extract_patches, feature,
                  features, init_params, load_params, nfs, save_params,
                  train_nfs)
from .pipeline import PipelineConfig, emit_report, run_pipeline
from .preprocess import (jet_smooth, remove_statistical_outliers,
                         resample_fraction)
from .scanner import (ViewpointSpec, fuse_views, render_view, render_views,
                      sample_viewpoints_object, sample_viewpoints_scene)
from .seeding import rng_for, stage_seed

__all__ = [
    "CameraIntrinsics", "CameraPose", "look_at_pose",
    "PointCloud", "SpatialIndex", "estimate_normals", "fps", "knn",
    "orient_normals", "random_sample",
    "CurvatureField", "complexity_score", "partition_corpus",
    "vertex_curvatures",
    "load_mesh", "load_obj", "load_ply_cloud", "load_ply_mesh",
    "save_mesh", "save_obj", "save_ply_cloud", "save_ply_mesh",
    "ImperfectionSpec", "add_noise", "add_outliers", "apply_sampling",
    "perturb_poses", "preset_key", "severity_preset", "truncated_normal",
    "TopologyReport", "TriMesh", "normalize", "sample_surface",
    "topology_report", "visibility_coverage",
    "MetricPreset", "MetricReport", "chamfer", "evaluate", "fscore",
    "metric_preset", "ncs",
    "MlpParams", "Patch", "TrainConfig", "extract_patches", "feature",
    "features", "init_params", "load_params", "nfs", "save_params",
    "train_nfs",
    "PipelineConfig", "emit_report", "run_pipeline",
    "jet_smooth", "remove_statistical_outliers", "resample_fraction",
    "ViewpointSpec", "fuse_views", "render_view", "render_views",
    "sample_viewpoints_object", "sample_viewpoints_scene",
    "rng_for", "stage_seed",
    "__version__",
]
