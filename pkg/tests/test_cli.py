"""End-to-end checks of the command line entry point.

Every test drives main(argv) in-process: exit codes are the contract
(0 success, 1 bad values, 2 i/o failures) and the artifacts written by
one command must be loadable by the next.
"""
import json
import os

import numpy as np
import pytest

from scanbench.cli import main
from scanbench.fileio import load_ply_cloud, save_mesh, save_ply_cloud
from scanbench.mesh import normalize, sample_surface
from scanbench.primitives import box, icosphere, plane_grid


@pytest.fixture(scope="module")
def mesh_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli_meshes")
    save_mesh(icosphere(2), d / "sph.ply")
    save_mesh(box((1.0, 0.8, 0.9)), d / "box.obj")
    save_mesh(plane_grid(2.0, divisions=4), d / "open.obj")
    return d


@pytest.fixture(scope="module")
def cloud_path(mesh_dir):
    cloud = sample_surface(normalize(icosphere(2), mode="object"), 3000, seed=1)
    p = mesh_dir / "sph__gt.ply"
    save_ply_cloud(cloud, p)
    return p


def test_version_flag_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_filter_accepts_closed_rejects_open(mesh_dir, capsys):
    rc = main(["filter", str(mesh_dir / "sph.ply"), str(mesh_dir / "open.obj")])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert lines[0].endswith("accept") and "sph.ply" in lines[0]
    assert lines[1].endswith("reject") and "open.obj" in lines[1]


def test_filter_missing_file_exits_two(tmp_path, capsys):
    rc = main(["filter", str(tmp_path / "nope.obj")])
    assert rc == 2
    assert "i/o error" in capsys.readouterr().err


def test_complexity_csv(mesh_dir, tmp_path, capsys):
    out = tmp_path / "scores.csv"
    rc = main(["complexity", str(mesh_dir / "sph.ply"),
               str(mesh_dir / "box.obj"), "--output", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "mesh,score"
    assert len(lines) == 3
    scores = [float(line.rsplit(",", 1)[1]) for line in lines[1:]]
    assert all(np.isfinite(scores))
    # unit sphere averages ~1, the box is dominated by flat faces
    assert scores[0] > scores[1]


def test_complexity_corpus_grouping(mesh_dir, tmp_path):
    # ten entries so the 60/30/10 partition applies exactly
    meshes = [str(mesh_dir / "sph.ply")] * 5 + [str(mesh_dir / "box.obj")] * 5
    out = tmp_path / "corpus.csv"
    rc = main(["complexity", *meshes, "--corpus", "--output", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "mesh,score,group"
    groups = [line.rsplit(",", 1)[1] for line in lines[1:]]
    assert len(groups) == 10
    counts = {g: groups.count(g) for g in set(groups)}
    assert counts == {"low": 6, "middle": 3, "high": 1}
    # spheres outscore boxes, so the single high entry is a sphere
    high_row = lines[1 + groups.index("high")]
    assert "sph.ply" in high_row


def test_scan_perturb_preprocess_chain(mesh_dir, tmp_path, capsys):
    scan = tmp_path / "scan.ply"
    rc = main(["--seed", "3", "scan", str(mesh_dir / "sph.ply"),
               "--output", str(scan), "--viewpoints", "12",
               "--image-size", "64", "--budget", "1500", "--normals-k", "16"])
    assert rc == 0
    cloud = load_ply_cloud(scan)
    assert len(cloud) == 1500
    assert cloud.normals is not None

    noisy = tmp_path / "noisy.ply"
    rc = main(["--seed", "3", "perturb", str(scan), "--kind", "noise",
               "--level", "middle", "--output", str(noisy)])
    assert rc == 0
    perturbed = load_ply_cloud(noisy)
    assert len(perturbed) == 1500
    assert not np.array_equal(perturbed.positions, cloud.positions)
    # 0.003 band, truncated at two sigma
    assert np.abs(perturbed.positions - cloud.positions).max() <= 0.006 + 1e-12

    spiked = tmp_path / "spiked.ply"
    rc = main(["perturb", str(scan), "--kind", "outliers", "--level", "low",
               "--output", str(spiked)])
    assert rc == 0
    spiked_cloud = load_ply_cloud(spiked)
    assert len(spiked_cloud) == 1500
    moved = (spiked_cloud.positions != cloud.positions).any(axis=1)
    assert moved.sum() == 2  # 1500 * 0.001 rounds to 2 displaced points

    rc = main(["perturb", str(scan), "--kind", "nonuniform",
               "--output", str(tmp_path / "x.ply")])
    assert rc == 1
    assert "target" in capsys.readouterr().err

    rc = main(["perturb", str(scan), "--kind", "nonuniform", "--level", "low",
               "--output", str(tmp_path / "x.ply")])
    assert rc == 1  # nonuniform rejects a severity level

    thin = tmp_path / "thin.ply"
    rc = main(["perturb", str(scan), "--kind", "nonuniform",
               "--target", "700", "--output", str(thin)])
    assert rc == 0
    assert len(load_ply_cloud(thin)) == 700

    clean = tmp_path / "clean.ply"
    rc = main(["preprocess", str(noisy), "--remove-outliers", "--smooth",
               "--resample", "0.5", "--output", str(clean)])
    assert rc == 0
    assert len(load_ply_cloud(clean)) <= 750


def test_scan_seed_determinism(mesh_dir, tmp_path):
    args = ["scan", str(mesh_dir / "sph.ply"), "--viewpoints", "8",
            "--image-size", "48", "--budget", "500", "--normals-k", "12"]
    a, b, c = (tmp_path / n for n in ("a.ply", "b.ply", "c.ply"))
    assert main(["--seed", "7", *args, "--output", str(a)]) == 0
    assert main(["--seed", "7", *args, "--output", str(b)]) == 0
    assert main(["--seed", "8", *args, "--output", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_eval_json_to_stdout(mesh_dir, cloud_path, capsys):
    rc = main(["eval", str(mesh_dir / "sph.ply"), str(cloud_path),
               "--gt-cloud", "--preset", "real"])
    assert rc == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["mesh"] == "sph"
    assert rep["preset"] == "real"
    # two independent 3000-point samplings of the same sphere: the mean
    # nearest-neighbour gap stays well under twice the sample spacing
    assert 0.0 <= rep["cd"] < 2.0 * np.sqrt(4.0 * np.pi / 3000)
    assert rep["fscore"] == 100.0  # tau 0.5 swallows the sampling gap
    assert rep["nfs"] is None


def test_eval_csv_report_file(mesh_dir, cloud_path, tmp_path):
    out = tmp_path / "rep.csv"
    rc = main(["eval", str(mesh_dir / "sph.ply"), str(cloud_path),
               "--gt-cloud", "--preset", "real",
               "--format", "csv", "--output", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == ("mesh,challenge,severity,cd,fscore,precision,"
                        "recall,ncs,nfs,preset,seed")
    assert len(lines) == 2
    assert lines[1].startswith("sph,")


def test_nfs_train_then_eval(cloud_path, tmp_path, capsys):
    model = tmp_path / "model.nfs"
    rc = main(["--seed", "5", "nfs-train", str(cloud_path), str(cloud_path),
               "--epochs", "2", "--patch-count", "4", "--patch-size", "16",
               "--radius-fraction", "0.3", "--output", str(model)])
    assert rc == 0
    assert model.stat().st_size > 0
    capsys.readouterr()

    rc = main(["nfs-eval", str(model), str(cloud_path), str(cloud_path),
               "--patch-count", "4", "--radius-fraction", "0.3"])
    assert rc == 0
    val = float(capsys.readouterr().out.strip())
    assert val == pytest.approx(1.0, abs=1e-6)  # identical clouds


def test_nfs_train_needs_two_entries(cloud_path, tmp_path, capsys):
    rc = main(["nfs-train", str(cloud_path),
               "--epochs", "1", "--patch-count", "4", "--patch-size", "16",
               "--radius-fraction", "0.3",
               "--output", str(tmp_path / "m.nfs")])
    assert rc == 1


def test_pipeline_then_report(mesh_dir, tmp_path, capsys):
    out_dir = tmp_path / "run"
    cfg = {
        "meshes": [str(mesh_dir / "sph.ply")],
        "seed": 5,
        "output_dir": str(out_dir),
        "challenges": ["perfect"],
        "viewpoint_count": 8,
        "image_size": 64,
        "budgets": {"low": 2000, "middle": 2000, "high": 2000, "scene": 2000},
        "normals_k": 16,
        "reconstructions": {"sph": str(mesh_dir / "sph.ply")},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))

    rc = main(["--config", str(cfg_path), "pipeline"])
    assert rc == 0
    assert "1 artifacts" in capsys.readouterr().out
    manifest = out_dir / "manifest.json"
    assert manifest.is_file()

    rep = tmp_path / "again.json"
    rc = main(["report", str(manifest), "--format", "json", "--output", str(rep)])
    assert rc == 0
    rows = json.loads(rep.read_text())
    assert len(rows) == 1
    assert rows[0]["mesh"] == "sph"


def test_pipeline_requires_config(capsys):
    rc = main(["pipeline"])
    assert rc == 1
    assert "--config" in capsys.readouterr().err


def test_report_rejects_empty_manifest(tmp_path, capsys):
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps({"reports": []}))
    rc = main(["report", str(p), "--format", "csv",
               "--output", str(tmp_path / "r.csv")])
    assert rc == 1
