"""Synthetic ground-truth scenes, simulated RGB-D sensor, and the active
reconstruction loop."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import belief, config as config_mod
from .config import SystemConfig
from .metrics import psnr
from .mi import SensorNoiseModel, luminance
from .optimizer import optimize_step
from .planner import (PlannerDeadlock, choose_best, evaluate_candidates, path_length,
                      primitive_sample)
from .renderer import rasterize
from .scene import (CameraIntrinsics, GaussianMap, Observation, Viewpoint,
                    backproject_spawn, load_map, save_map)

log = logging.getLogger(__name__)

DEFAULT_INTRINSICS = CameraIntrinsics.from_fov(80, 60, 90.0, near=0.1, far=20.0)


@dataclass
class GroundTruthScene:
    gaussians: GaussianMap
    workspace_min: np.ndarray
    workspace_max: np.ndarray
    start: Viewpoint
    test_views: list[Viewpoint] = field(default_factory=list)
    name: str = "scene"

    def __post_init__(self):
        self.workspace_min = np.asarray(self.workspace_min, dtype=np.float64)
        self.workspace_max = np.asarray(self.workspace_max, dtype=np.float64)
        if np.any(self.start.position < self.workspace_min) or np.any(self.start.position > self.workspace_max):
            raise ValueError("start pose lies outside the workspace")

    @property
    def diagonal(self) -> float:
        p = self.gaussians.positions
        return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0))) if len(p) else 1.0

    def configure(self, cfg: SystemConfig) -> SystemConfig:
        """Copy of ``cfg`` with this scene's workspace box."""
        return cfg.replace(workspace_min=tuple(self.workspace_min),
                           workspace_max=tuple(self.workspace_max))


# --- procedural scenes --------------------------------------------------------

def _frame_quat(normal: np.ndarray) -> np.ndarray:
    """Quaternion (wxyz) rotating +z onto ``normal``."""
    z = np.array([0.0, 0.0, 1.0])
    n = normal / np.linalg.norm(normal)
    c = float(z @ n)
    if c < -1 + 1e-12:
        return np.array([0.0, 1.0, 0.0, 0.0])
    axis = np.cross(z, n)
    q = np.array([1.0 + c, *axis])
    return q / np.linalg.norm(q)


def _surfels(points, normals, colors, size, opacity=0.95):
    n = len(points)
    rots = np.stack([_frame_quat(nv) for nv in normals])
    scales = np.tile([size, size, 0.2 * size], (n, 1))
    return GaussianMap(np.asarray(points), rots, scales, np.clip(colors, 0.02, 0.98),
                       np.full(n, opacity), np.zeros((n, 4)))


def _cylinder(center, radius, height, n_around, n_up, texture):
    th = np.linspace(0, 2 * np.pi, n_around, endpoint=False)
    zs = (np.arange(n_up) + 0.5) / n_up * height
    T, Z = np.meshgrid(th, zs)
    T, Z = T.ravel(), Z.ravel()
    pts = np.stack([center[0] + radius * np.cos(T), center[1] + radius * np.sin(T), center[2] + Z], 1)
    normals = np.stack([np.cos(T), np.sin(T), np.zeros_like(T)], 1)
    size = 0.75 * max(2 * np.pi * radius / n_around, height / n_up)
    return _surfels(pts, normals, texture(T, Z / height), size)


def _box(center, half, per_face, texture):
    pts, normals, uv, face_ids = [], [], [], []
    for fi, (axis, sign) in enumerate([(0, 1), (0, -1), (1, 1), (1, -1), (2, 1)]):
        others = [a for a in range(3) if a != axis]
        a, b = np.meshgrid((np.arange(per_face) + 0.5) / per_face, (np.arange(per_face) + 0.5) / per_face)
        a, b = a.ravel(), b.ravel()
        p = np.zeros((len(a), 3))
        p[:, axis] = sign * half[axis]
        p[:, others[0]] = (2 * a - 1) * half[others[0]]
        p[:, others[1]] = (2 * b - 1) * half[others[1]]
        nrm = np.zeros_like(p)
        nrm[:, axis] = sign
        pts.append(p + center)
        normals.append(nrm)
        uv.append(np.stack([a, b], 1))
        face_ids.append(np.full(len(a), fi))
    pts, normals, uv, face_ids = map(np.concatenate, (pts, normals, uv, face_ids))
    size = 0.75 * 2 * max(half) / per_face
    return _surfels(pts, normals, texture(face_ids, uv), size)


def _drum_texture(theta, h):
    stripes = 0.5 + 0.5 * np.sign(np.sin(6 * theta))
    hue = np.stack([0.55 + 0.4 * np.cos(theta), 0.35 + 0.3 * np.sin(theta), 0.25 + 0.5 * h], 1)
    return hue * (0.45 + 0.55 * stripes[:, None])


def _box_texture(face, uv):
    base = np.array([[0.85, 0.25, 0.2], [0.2, 0.6, 0.85], [0.3, 0.8, 0.3],
                     [0.9, 0.8, 0.2], [0.7, 0.4, 0.8]])[face]
    checker = ((np.floor(uv[:, 0] * 4) + np.floor(uv[:, 1] * 4)) % 2)[:, None]
    return base * (0.5 + 0.5 * checker)


def _ring_views(target, radius, heights, n_az, phase=0.0):
    views = []
    for h in heights:
        for k in range(n_az):
            az = phase + 2 * np.pi * k / n_az
            pos = np.array([target[0] + radius * np.cos(az), target[1] + radius * np.sin(az), h])
            views.append(Viewpoint(pos, math.atan2(target[1] - pos[1], target[0] - pos[0])))
    return views


def make_toy_scene(kind: str = "drum", seed: int = 0) -> GroundTruthScene:
    """Procedural desk-scale scene with at most 500 ground-truth Gaussians.

    ``kind`` is one of ``drum`` (striped cylinder), ``crate`` (checkered
    box) or ``pair`` (small cylinder beside a small box).
    """
    rng = np.random.default_rng(seed)
    if kind == "drum":
        gt = _cylinder((0.0, 0.0, 0.0), 0.4, 1.0, 36, 12, _drum_texture)
    elif kind == "crate":
        gt = _box(np.array([0.0, 0.0, 0.45]), np.array([0.4, 0.3, 0.45]), 9, _box_texture)
    elif kind == "pair":
        gt = _cylinder((0.35, 0.3, 0.0), 0.25, 0.9, 24, 9, _drum_texture)
        gt.extend(_box(np.array([-0.3, -0.3, 0.3]), np.array([0.25, 0.25, 0.3]), 7, _box_texture))
    else:
        raise ValueError(f"unknown toy scene {kind!r}")
    # small per-scene colour jitter so seeds give distinct textures
    gt.colors = np.clip(gt.colors + rng.normal(0, 0.03, gt.colors.shape), 0.02, 0.98)
    assert len(gt) <= 500
    target = np.array([0.0, 0.0, 0.5])
    start_pos = np.array([1.3, 0.0, 0.6])
    start = Viewpoint(start_pos, math.atan2(-start_pos[1], -start_pos[0]))
    tests = _ring_views(target, 1.4, (0.4, 0.9), 8, phase=np.pi / 8)
    return GroundTruthScene(gt, (-1.8, -1.8, 0.1), (1.8, 1.8, 1.5), start, tests, kind)


REFERENCE_PIXELS = 640 * 480


def resolution_matched(cfg: SystemConfig, K: CameraIntrinsics) -> SystemConfig:
    """Scale w_I so summed per-pixel MI keeps its 640x480 magnitude at ``K``'s size."""
    return cfg.replace(w_I=cfg.w_I * REFERENCE_PIXELS / (K.width * K.height))


# --- sensor ---------------------------------------------------------------------

def groundtruth_observe(scene: GroundTruthScene, pose: Viewpoint, K: CameraIntrinsics,
                        noise: SensorNoiseModel | None = None, seed=None,
                        min_coverage: float = 0.5) -> Observation:
    """Render the ground truth at ``pose``.

    Depth is the opacity-normalised ray distance, reported as 0 where the
    rendered coverage is below ``min_coverage``. With ``noise``, zero-mean
    Gaussian noise of std ``noise.sigma(luminance)`` is added per channel.
    """
    out = rasterize(scene.gaussians, pose, K, record=False)
    color = out.color
    if noise is not None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        sigma = noise.sigma(luminance(color))
        color = np.clip(color + rng.standard_normal(color.shape) * sigma[..., None], 0.0, 1.0)
    depth = np.where(out.coverage >= min_coverage, out.normalized_depth(), 0.0)
    depth = np.where((depth >= K.near) & (depth <= K.far), depth, 0.0)
    return Observation(color, depth, pose.at_rest())


def groundtruth_images(scene: GroundTruthScene, K: CameraIntrinsics, views=None) -> list[np.ndarray]:
    views = scene.test_views if views is None else views
    key = (K, tuple(id(v) for v in views))
    cache = scene.__dict__.setdefault("_gt_cache", {})
    if key not in cache:
        cache[key] = [rasterize(scene.gaussians, v, K, record=False).color for v in views]
    return cache[key]


def heldout_psnr(gmap: GaussianMap, scene: GroundTruthScene, K: CameraIntrinsics,
                 views=None) -> float:
    views = scene.test_views if views is None else views
    gts = groundtruth_images(scene, K, views)
    vals = [psnr(rasterize(gmap, v, K, record=False).color, gt) for v, gt in zip(views, gts)]
    return float(np.mean(vals))


# --- active loop ----------------------------------------------------------------

@dataclass
class StepRecord:
    step: int
    n_frames: int
    path_length: float
    mi: float
    cost_J: float
    reward: float
    best_safe_reward: float
    done_fraction: float
    n_done: int
    psnr: float
    n_gaussians: int
    loss: float
    x: float
    y: float
    z: float
    yaw: float


LOG_FIELDS = tuple(f.name for f in dataclasses.fields(StepRecord))


@dataclass
class LoopLog:
    records: list[StepRecord] = field(default_factory=list)
    status: str = "running"
    policy: str = ""
    seed: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


class KeyframeWindow:
    """All keyframes up to ``cap``; beyond it a uniformly chosen older one is evicted."""

    def __init__(self, cap: int, rng: np.random.Generator):
        self.cap = max(1, cap)
        self.rng = rng
        self.frames: list[Observation] = []

    def add(self, obs: Observation) -> None:
        self.frames.append(obs)
        if len(self.frames) > self.cap:
            self.frames.pop(int(self.rng.integers(0, len(self.frames) - 1)))


def _integrate(gmap: GaussianMap, obs: Observation, window: KeyframeWindow,
               K: CameraIntrinsics, cfg: SystemConfig, depth_scale: float,
               rng: np.random.Generator):
    """Spawn, optimise and update beliefs for one new frame."""
    if len(gmap):
        coverage = rasterize(gmap, obs.pose, K, record=False).coverage
        mask = coverage < cfg.spawn_coverage
    else:
        mask = None
    spawned = backproject_spawn(obs, K, cfg.spawn_stride, cfg.spawn_opacity, mask)
    gmap.extend(spawned)
    window.add(obs)
    stats = optimize_step(gmap, window.frames, K, cfg.optimizer_iters, cfg.optimizer_lr,
                          cfg.lambda_c, depth_scale,
                          keyframes_per_iter=cfg.keyframes_per_iter, rng=rng)
    bcfg = cfg.replace(depth_scale=depth_scale)
    belief.update_probabilities(gmap, obs, K, bcfg)
    return stats


def run_active_loop(scene: GroundTruthScene, cfg: SystemConfig, policy: str = "gauss_mi",
                    max_steps: int = 30, seed: int = 0,
                    K: CameraIntrinsics = DEFAULT_INTRINSICS,
                    noise: SensorNoiseModel | None = None,
                    track_psnr: bool = True,
                    stop_on_termination: bool = True) -> tuple[GaussianMap, LoopLog]:
    """Observe, map, update beliefs, plan and move until termination.

    ``policy`` is ``gauss_mi`` (reward-maximising next best view) or
    ``random`` (uniform among safe candidates). One frame is captured at the
    start pose and one at every selected viewpoint, so a run makes at most
    ``max_steps + 1`` frames. ``stop_on_termination=False`` runs the full
    frame budget regardless of the done fraction.
    """
    policy = policy.replace("-", "_")
    if policy not in ("gauss_mi", "random"):
        raise ValueError(f"unknown policy {policy!r}")
    cfg = scene.configure(cfg)
    depth_scale = cfg.resolved_depth_scale(scene.diagonal)
    rng = np.random.default_rng(seed)
    noise_rng = np.random.default_rng([seed, 1])
    window = KeyframeWindow(cfg.keyframe_cap, np.random.default_rng([seed, 2]))
    opt_rng = np.random.default_rng([seed, 3])
    gmap = GaussianMap.empty()
    logbook = LoopLog(policy=policy, seed=seed)

    state = scene.start.at_rest()
    obs = groundtruth_observe(scene, state, K, noise, noise_rng)
    stats = _integrate(gmap, obs, window, K, cfg, depth_scale, opt_rng)
    n_frames, travelled = 1, 0.0

    def record(step, mi=0.0, J=0.0, reward=0.0, best=0.0):
        logbook.records.append(StepRecord(
            step, n_frames, travelled, mi, J, reward, best,
            belief.done_fraction(gmap, cfg.tau),
            int(np.sum(belief.mean_reliability(gmap) > cfg.tau)) if len(gmap) else 0,
            heldout_psnr(gmap, scene, K) if track_psnr else float("nan"),
            len(gmap), stats.final_loss, *state.position, state.yaw))

    record(0)
    for step in range(1, max_steps + 1):
        if stop_on_termination and belief.terminated(gmap, cfg):
            logbook.status = "terminated"
            break
        cands = evaluate_candidates(gmap, state, cfg, K, with_mi=(policy == "gauss_mi"))
        try:
            if policy == "gauss_mi":
                chosen = choose_best(cands)
            else:
                safe = [c for c in cands if c.safe]
                if not safe:
                    raise PlannerDeadlock("no safe motion primitive in the action space")
                chosen = safe[int(rng.integers(len(safe)))]
        except PlannerDeadlock as exc:
            log.warning("step %d: %s", step, exc)
            logbook.status = "deadlock"
            return gmap, logbook
        best = max((c.reward for c in cands if c.safe), default=0.0)
        travelled += path_length(chosen.primitive)
        state = primitive_sample(chosen.primitive, chosen.primitive.duration).at_rest()
        obs = groundtruth_observe(scene, state, K, noise, noise_rng)
        n_frames += 1
        stats = _integrate(gmap, obs, window, K, cfg, depth_scale, opt_rng)
        mi = chosen.mi.total_mi if chosen.mi is not None else float("nan")
        reward = chosen.reward if chosen.mi is not None else float("nan")
        record(step, mi, chosen.primitive.snap_cost, reward, best if chosen.mi is not None else float("nan"))
    else:
        logbook.status = "max_steps"
    return gmap, logbook


# --- scene files ----------------------------------------------------------------

def _sidecar(path) -> Path:
    return Path(path).with_suffix(".cfg")


def save_scene(scene: GroundTruthScene, path) -> None:
    """Write ``path`` (PLY) plus ``<stem>.cfg`` with workspace, start pose and test views."""
    save_map(scene.gaussians, path)
    fmt = lambda v: ", ".join(repr(float(x)) for x in v)
    lines = [f"name = {scene.name}",
             f"workspace_min = {fmt(scene.workspace_min)}",
             f"workspace_max = {fmt(scene.workspace_max)}",
             f"start_pose = {fmt([*scene.start.position, scene.start.yaw])}"]
    lines += [f"test_view = {fmt([*v.position, v.yaw])}" for v in scene.test_views]
    _sidecar(path).write_text("\n".join(lines) + "\n")


def load_scene(path) -> GroundTruthScene:
    gmap = load_map(path)
    side = _sidecar(path)
    if not side.exists():
        raise FileNotFoundError(f"scene sidecar {side} not found")
    vals: dict[str, list] = {}
    for lineno, line in enumerate(side.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = (s.strip() for s in line.partition("="))
        if not sep or key not in ("name", "workspace_min", "workspace_max", "start_pose", "test_view"):
            raise config_mod.ConfigError(f"{side}: line {lineno}: bad entry {line!r}")
        vals.setdefault(key, []).append(raw)
    for key in ("workspace_min", "workspace_max", "start_pose"):
        if key not in vals:
            raise config_mod.ConfigError(f"{side}: missing {key}")
    nums = lambda s: [float(x) for x in s.split(",")]
    start = nums(vals["start_pose"][0])
    tests = [nums(v) for v in vals.get("test_view", [])]
    return GroundTruthScene(gmap, nums(vals["workspace_min"][0]), nums(vals["workspace_max"][0]),
                            Viewpoint(start[:3], start[3]),
                            [Viewpoint(t[:3], t[3]) for t in tests],
                            vals.get("name", ["scene"])[0])


# --- policy comparison ----------------------------------------------------------

@dataclass
class RunResult:
    scene: str
    policy: str
    seed: int
    final_psnr: float
    n_frames: int
    done_monotone: bool
    status: str
    gmap: GaussianMap = field(repr=False, default=None)
    log: LoopLog = field(repr=False, default=None)


def compare_policies(kinds=("drum", "crate", "pair"), seeds=range(5), n_frames: int = 30,
                     cfg: SystemConfig | None = None, K: CameraIntrinsics = DEFAULT_INTRINSICS,
                     policies=("gauss_mi", "random"), keep_maps: bool = False) -> list[RunResult]:
    """Fixed-frame-budget runs of each policy on procedural scenes."""
    cfg = resolution_matched(cfg or SystemConfig(), K)
    results = []
    for kind in kinds:
        scene = make_toy_scene(kind)
        for seed in seeds:
            for policy in policies:
                gmap, lg = run_active_loop(scene, cfg, policy, n_frames - 1, seed, K,
                                           stop_on_termination=False)
                done = lg.column("done_fraction")
                results.append(RunResult(
                    kind, policy, seed, lg.records[-1].psnr, lg.records[-1].n_frames,
                    bool(np.all(np.diff(done) >= 0)), lg.status,
                    gmap if keep_maps else None, lg if keep_maps else None))
                log.info("%s %s seed=%d psnr=%.2f", kind, policy, seed, results[-1].final_psnr)
    return results
