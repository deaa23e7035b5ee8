"""Command-line entry points: simulate, render, mi, plan, metrics, make-scene.

Poses are given as ``"x,y,z,yaw"`` (meters, radians). Scenes are either a
built-in procedural kind (``drum``, ``crate``, ``pair``) or a scene file
written by ``make-scene`` (PLY map plus ``.cfg`` sidecar). A test set is a
directory holding ``views.txt`` (one pose per line) and ``view_NNN.ppm``
ground-truth images, as written by ``make-scene --testset``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, metrics
from .config import SystemConfig, load_config
from .mi import SensorNoiseModel, evaluate_gauss_mi
from .planner import evaluate_candidates
from .renderer import rasterize
from .scene import CameraIntrinsics, Viewpoint, load_map, save_map
from .sim import (LOG_FIELDS, GroundTruthScene, groundtruth_observe, load_scene,
                  make_toy_scene, resolution_matched, run_active_loop, save_scene)

TOY_KINDS = ("drum", "crate", "pair")


class CLIError(Exception):
    pass


def _intrinsics(args) -> CameraIntrinsics:
    return CameraIntrinsics.from_fov(args.width, args.height, args.hfov, near=0.1, far=20.0)


def _config(args, K: CameraIntrinsics) -> SystemConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else SystemConfig()
    if getattr(args, "match_resolution", False):
        cfg = resolution_matched(cfg, K)
    return cfg


def _scene(name: str, seed: int = 0) -> GroundTruthScene:
    if name in TOY_KINDS:
        return make_toy_scene(name, seed)
    if not Path(name).exists():
        raise CLIError(f"scene {name!r} is neither a built-in kind {TOY_KINDS} nor a file")
    return load_scene(name)


def _pose(text: str) -> Viewpoint:
    try:
        return Viewpoint.from_string(text)
    except ValueError as exc:
        raise CLIError(f"bad pose {text!r}: {exc}") from exc


def _read_testset(directory) -> tuple[list[Viewpoint], list[np.ndarray]]:
    d = Path(directory)
    listing = d / "views.txt"
    if not listing.exists():
        raise CLIError(f"{listing} not found")
    views = [Viewpoint.from_string(line) for line in listing.read_text().splitlines()
             if line.strip() and not line.lstrip().startswith("#")]
    images = [io.read_ppm(d / f"view_{i:03d}.ppm") for i in range(len(views))]
    return views, images


def write_testset(scene: GroundTruthScene, K: CameraIntrinsics, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, v in enumerate(scene.test_views):
        io.write_ppm(rasterize(scene.gaussians, v, K, record=False).color, d / f"view_{i:03d}.ppm")
        lines.append(",".join(repr(float(x)) for x in (*v.position, v.yaw)))
    (d / "views.txt").write_text("\n".join(lines) + "\n")


# --- subcommands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    K = _intrinsics(args)
    cfg = _config(args, K)
    scene = _scene(args.scene, args.scene_seed)
    noise = SensorNoiseModel.from_config(cfg) if args.noise else None
    gmap, logbook = run_active_loop(scene, cfg, args.policy, args.max_steps, args.seed, K,
                                    noise=noise, stop_on_termination=not args.full_budget)
    out = Path(args.out)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    save_map(gmap, out / "map.ply")
    io.write_csv(logbook.records, out / "log.csv", LOG_FIELDS)
    for rec in logbook.records:
        pose = Viewpoint([rec.x, rec.y, rec.z], rec.yaw)
        obs = groundtruth_observe(scene, pose, K)
        io.write_ppm(obs.color, out / "frames" / f"frame_{rec.step:03d}.ppm")
        io.write_pfm(obs.depth, out / "frames" / f"depth_{rec.step:03d}.pfm")
    last = logbook.records[-1]
    print(f"status={logbook.status} frames={last.n_frames} gaussians={last.n_gaussians} "
          f"done_fraction={last.done_fraction:.4f} psnr={last.psnr:.3f} "
          f"path_length={last.path_length:.3f}")
    return 0


def cmd_render(args) -> int:
    K = _intrinsics(args)
    out = rasterize(load_map(args.map), _pose(args.pose), K, record=False)
    io.write_ppm(out.color, args.out)
    if args.depth:
        io.write_pfm(out.normalized_depth(), args.depth)
    return 0


def cmd_mi(args) -> int:
    K = _intrinsics(args)
    cfg = _config(args, K)
    res = evaluate_gauss_mi(load_map(args.map), _pose(args.pose), K,
                            SensorNoiseModel.from_config(cfg))
    if args.mi_image:
        io.write_pfm(res.mi_image, args.mi_image)
    print(f"{res.total_mi:.12g}")
    return 0


def cmd_plan(args) -> int:
    K = _intrinsics(args)
    cfg = _config(args, K)
    cands = evaluate_candidates(load_map(args.map), _pose(args.state).at_rest(), cfg, K)
    ranked = sorted(cands, key=lambda c: (not c.safe, -c.reward, c.index))
    if args.top:
        ranked = ranked[: args.top]
    print(f"{'rank':>4} {'idx':>4} {'v_xy':>6} {'v_z':>6} {'omega_z':>8} {'safe':>5} "
          f"{'I':>12} {'J':>12} {'R':>12}")
    for rank, c in enumerate(ranked, 1):
        I = c.mi.total_mi if c.mi is not None else float("nan")
        R = c.reward if c.safe else float("nan")
        print(f"{rank:>4} {c.index:>4} {c.action.v_xy:>6.3f} {c.action.v_z:>6.3f} "
              f"{c.action.omega_z:>8.4f} {str(c.safe):>5} {I:>12.6g} "
              f"{c.primitive.snap_cost:>12.6g} {R:>12.6g}")
    return 0


def cmd_metrics(args) -> int:
    K = _intrinsics(args)
    cfg = _config(args, K)
    gmap = load_map(args.map)
    if args.testset:
        views, gts = _read_testset(args.testset)
    else:
        scene = _scene(args.scene)
        views = scene.test_views
        gts = [rasterize(scene.gaussians, v, K, record=False).color for v in views]
    if not views:
        raise CLIError("test set is empty")
    model = SensorNoiseModel.from_config(cfg)
    rows, curves = [], []
    for i, (v, gt) in enumerate(zip(views, gts)):
        if gt.shape[:2] != (K.height, K.width):
            raise CLIError(f"test image {i} is {gt.shape[1]}x{gt.shape[0]}, camera is {K.width}x{K.height}")
        img = rasterize(gmap, v, K, record=False).color
        err = np.abs(img - gt).mean(axis=2)
        curve = metrics.sparsification(err, evaluate_gauss_mi(gmap, v, K, model).mi_image)
        curves.append(curve)
        rows.append((i, metrics.psnr(img, gt), metrics.ssim(img, gt), metrics.ause(curve)))
    p = float(np.mean([r[1] for r in rows]))
    s = float(np.mean([r[2] for r in rows]))
    a = float(np.mean([r[3] for r in rows]))
    e = metrics.efficiency(p, args.frames, args.log_base) if args.frames else float("nan")
    print(f"{'view':>6} {'PSNR':>9} {'SSIM':>7} {'AUSE':>7}")
    for i, pv, sv, av in rows:
        print(f"{i:>6} {pv:>9.3f} {sv:>7.4f} {av:>7.4f}")
    print(f"{'mean':>6} {p:>9.3f} {s:>7.4f} {a:>7.4f}")
    print(f"E = {e:.4f}" if args.frames else "E = n/a (pass --frames)")
    sparse_path = args.sparsification or Path(args.map).with_name("sparsification.csv")
    recs = [{"view": i, "fraction": float(f), "mae": float(m), "oracle_mae": float(o)}
            for i, c in enumerate(curves)
            for f, m, o in zip(c.fractions, c.mae, c.oracle_mae)]
    io.write_csv(recs, sparse_path, ("view", "fraction", "mae", "oracle_mae"))
    print(f"AUSE = {a:.4f}  sparsification curves -> {sparse_path}")
    return 0


def cmd_make_scene(args) -> int:
    scene = make_toy_scene(args.kind, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_scene(scene, args.out)
    if args.testset:
        write_testset(scene, _intrinsics(args), args.testset)
    return 0


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gaussmi", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def camera(sp):
        sp.add_argument("--width", type=int, default=80)
        sp.add_argument("--height", type=int, default=60)
        sp.add_argument("--hfov", type=float, default=90.0, help="horizontal field of view, degrees")

    def config(sp, required=False):
        sp.add_argument("--config", required=required, help="flat key = value config file")
        sp.add_argument("--match-resolution", action=argparse.BooleanOptionalAction, default=True,
                        help="scale w_I so summed MI keeps its 640x480 magnitude (default on)")

    sp = sub.add_parser("simulate", help="run the active reconstruction loop")
    sp.add_argument("--scene", required=True)
    config(sp)
    sp.add_argument("--policy", choices=("gauss-mi", "random"), default="gauss-mi")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scene-seed", type=int, default=0)
    sp.add_argument("--max-steps", type=int, default=30)
    sp.add_argument("--noise", action="store_true", help="add luminance-dependent sensor noise")
    sp.add_argument("--full-budget", action="store_true", help="ignore the termination test")
    sp.add_argument("--out", required=True)
    camera(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("render", help="render a map to a PPM image")
    sp.add_argument("--map", required=True)
    sp.add_argument("--pose", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--depth", help="also write normalised depth as PFM")
    camera(sp)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("mi", help="print the total MI of a view")
    sp.add_argument("--map", required=True)
    sp.add_argument("--pose", required=True)
    sp.add_argument("--mi-image", help="write the per-pixel MI image as PFM")
    config(sp)
    camera(sp)
    sp.set_defaults(func=cmd_mi)

    sp = sub.add_parser("plan", help="rank candidate primitives by reward")
    sp.add_argument("--map", required=True)
    sp.add_argument("--state", required=True)
    config(sp)
    sp.add_argument("--top", type=int, default=0, help="print only the best N")
    camera(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("metrics", help="PSNR/SSIM/E table and sparsification")
    sp.add_argument("--map", required=True)
    sp.add_argument("--scene", default="drum")
    sp.add_argument("--testset", help="directory with views.txt and view_NNN.ppm")
    sp.add_argument("--frames", type=int, default=0, help="frame count for the efficiency E")
    sp.add_argument("--log-base", type=float, default=10.0)
    sp.add_argument("--sparsification",
                    help="CSV path for the sparsification curves (default: next to the map)")
    config(sp)
    camera(sp)
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("make-scene", help="write a procedural scene file")
    sp.add_argument("--kind", choices=TOY_KINDS, default="drum")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--testset", help="also render the held-out views into this directory")
    camera(sp)
    sp.set_defaults(func=cmd_make_scene)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CLIError, OSError, ValueError, RuntimeError) as exc:
        print(f"gaussmi {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
