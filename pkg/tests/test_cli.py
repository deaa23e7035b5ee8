import math

import numpy as np
import pytest

from gaussmi import evaluate_gauss_mi, load_map
from gaussmi.cli import main
from gaussmi.io import read_csv, read_pfm, read_ppm
from gaussmi.scene import CameraIntrinsics, Viewpoint
from gaussmi.sim import LOG_FIELDS

SMALL = ["--width", "32", "--height", "24"]
POSE = "2.2,0,0.5,3.14159"


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["simulate", "--scene", "drum", "--max-steps", "2", "--full-budget",
                 "--out", str(out), *SMALL]) == 0
    return out


def test_simulate_writes_map_log_and_frames(sim_dir, capsys):
    assert (sim_dir / "map.ply").exists()
    rows = read_csv(sim_dir / "log.csv")
    assert len(rows) == 3 and list(rows[0]) == list(LOG_FIELDS)
    assert [int(r["n_frames"]) for r in rows] == [1, 2, 3]
    assert read_ppm(sim_dir / "frames" / "frame_002.ppm").shape == (24, 32, 3)
    assert read_pfm(sim_dir / "frames" / "depth_000.pfm").shape == (24, 32)
    assert len(load_map(sim_dir / "map.ply")) > 0


def test_render_writes_image_and_depth(sim_dir, tmp_path):
    img, depth = tmp_path / "r.ppm", tmp_path / "r.pfm"
    assert main(["render", "--map", str(sim_dir / "map.ply"), "--pose", POSE,
                 "--out", str(img), "--depth", str(depth), *SMALL]) == 0
    assert read_ppm(img).shape == (24, 32, 3)
    assert read_pfm(depth).shape == (24, 32)


def test_mi_prints_total_matching_library(sim_dir, tmp_path, capsys):
    mi_img = tmp_path / "mi.pfm"
    assert main(["mi", "--map", str(sim_dir / "map.ply"), "--pose", POSE,
                 "--mi-image", str(mi_img), *SMALL]) == 0
    printed = float(capsys.readouterr().out.strip())
    K = CameraIntrinsics.from_fov(32, 24, 90.0, near=0.1, far=20.0)
    res = evaluate_gauss_mi(load_map(sim_dir / "map.ply"), Viewpoint.from_string(POSE), K)
    assert printed == pytest.approx(res.total_mi, rel=1e-11)
    assert read_pfm(mi_img).sum() == pytest.approx(res.total_mi, rel=1e-5)


def test_plan_prints_ranked_table(sim_dir, capsys):
    assert main(["plan", "--map", str(sim_dir / "map.ply"), "--state", POSE,
                 "--top", "5", *SMALL]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split()[-3:] == ["I", "J", "R"]
    assert len(lines) == 6
    rewards = [float(l.split()[-1]) for l in lines[1:] if l.split()[5] == "True"]
    assert rewards == sorted(rewards, reverse=True)


def test_make_scene_and_metrics_with_testset(tmp_path, sim_dir, capsys):
    scene, tset = tmp_path / "s.ply", tmp_path / "tset"
    assert main(["make-scene", "--kind", "crate", "--out", str(scene),
                 "--testset", str(tset), *SMALL]) == 0
    assert scene.with_suffix(".cfg").exists()
    assert len((tset / "views.txt").read_text().splitlines()) == 16
    csv_path = tmp_path / "sp.csv"
    assert main(["metrics", "--map", str(sim_dir / "map.ply"), "--testset", str(tset),
                 "--frames", "3", "--sparsification", str(csv_path), *SMALL]) == 0
    out = capsys.readouterr().out
    assert "E = " in out and "AUSE = " in out
    assert len(read_csv(csv_path)) == 16 * 100


def test_metrics_reports_efficiency(sim_dir, tmp_path, capsys):
    assert main(["metrics", "--map", str(sim_dir / "map.ply"), "--scene", "drum", "--frames", "3",
                 "--sparsification", str(tmp_path / "sp.csv"), *SMALL]) == 0
    lines = capsys.readouterr().out.splitlines()
    mean_psnr = float(next(l for l in lines if l.split()[0] == "mean").split()[1])
    e = float(next(l for l in lines if l.startswith("E = ")).split()[2])
    assert e == pytest.approx(mean_psnr / math.log10(3), abs=2e-3)


def test_simulate_accepts_scene_file(tmp_path):
    scene = tmp_path / "pair.ply"
    assert main(["make-scene", "--kind", "pair", "--out", str(scene)]) == 0
    out = tmp_path / "run"
    assert main(["simulate", "--scene", str(scene), "--max-steps", "0", "--policy", "random",
                 "--out", str(out), *SMALL]) == 0
    assert len(read_csv(out / "log.csv")) == 1


@pytest.mark.parametrize("argv, fragment", [
    (["render", "--map", "missing.ply", "--pose", POSE, "--out", "x.ppm"], "missing.ply"),
    (["mi", "--map", "missing.ply", "--pose", POSE], "missing.ply"),
    (["simulate", "--scene", "teapot", "--out", "o"], "teapot"),
    (["metrics", "--map", "missing.ply"], "missing.ply"),
])
def test_errors_exit_nonzero_with_message(argv, fragment, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1
    err = capsys.readouterr().err
    assert "error" in err and fragment in err


def test_bad_pose_and_config(sim_dir, tmp_path, capsys):
    assert main(["mi", "--map", str(sim_dir / "map.ply"), "--pose", "1,2"]) == 1
    assert "bad pose" in capsys.readouterr().err
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("tau = 2.0\n")
    assert main(["plan", "--map", str(sim_dir / "map.ply"), "--state", POSE,
                 "--config", str(cfg)]) == 1
    assert "tau" in capsys.readouterr().err


def test_missing_testset_listing(sim_dir, tmp_path, capsys):
    assert main(["metrics", "--map", str(sim_dir / "map.ply"), "--testset", str(tmp_path)]) == 1
    assert "views.txt" in capsys.readouterr().err


def test_usage_errors_exit_with_status_2():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--policy", "greedy", "--scene", "drum", "--out", "x"])
    assert exc.value.code == 2
