"""Per-step photometric/depth refinement of a Gaussian map.

Only color, opacity and position are optimised; rotation and scale stay
fixed and no densification happens. Gradients are analytic through the
blending weights; the covariance is held constant w.r.t. position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .renderer import project_map
from .scene import OPACITY_MAX, OPACITY_MIN, CameraIntrinsics, GaussianMap, Observation

PRUNE_OPACITY = 0.005


@dataclass
class OptimizeStats:
    losses: list[float] = field(default_factory=list)
    pruned: int = 0

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def loss_and_grads(gmap: GaussianMap, obs: Observation, K: CameraIntrinsics,
                   lambda_c: float = 0.9, depth_scale: float = 5.0):
    """Mean loss-image value for one keyframe and its parameter gradients.

    Returns ``(loss, d_color (N,3), d_opacity (N,), d_position (N,3))``.
    """
    n = len(gmap)
    H, W = K.height, K.width
    proj = project_map(gmap, obs.pose, K)
    feats = np.ascontiguousarray(np.concatenate(
        [gmap.colors, proj.depth[:, None], np.ones((n, 1))], axis=1))
    cap = int(np.sum((proj.bbox[:, 2] - proj.bbox[:, 0]) * (proj.bbox[:, 3] - proj.bbox[:, 1])))
    img, trans, cp, cg, cw, ca, _ = _kernels.blend_forward(
        proj.order(), proj.mean2d, proj.conic, gmap.opacities, feats,
        proj.bbox, W, H, True, cap)
    color = img[:, :3]
    D = img[:, 3]
    # accumulated opacity; equals the blended ones-channel img[:, 4] up to
    # rounding, but matches RenderOutput.normalized_depth exactly
    A = 1.0 - trans
    obs_c = obs.color.reshape(-1, 3)
    obs_d = obs.depth.reshape(-1)
    valid = obs_d > 0
    hit = A > 1e-6
    Dn = np.where(hit, D / np.where(hit, A, 1.0), 0.0)
    wc = np.where(valid, lambda_c, 1.0)
    wd = np.where(valid, (1.0 - lambda_c) / depth_scale, 0.0)
    cdiff = color - obs_c
    ddiff = Dn - obs_d
    per_pixel = wc * np.abs(cdiff).mean(axis=1) + wd * np.abs(ddiff)
    npix = H * W
    grad = np.zeros((npix, 5))
    grad[:, :3] = (wc / 3.0)[:, None] * np.sign(cdiff) / npix
    sd = np.where(hit, wd * np.sign(ddiff) / npix, 0.0)
    Asafe = np.where(hit, A, 1.0)
    grad[:, 3] = sd / Asafe
    grad[:, 4] = -sd * D / Asafe**2
    g_feat, g_op, g_mean = _kernels.blend_backward(
        cp, cg, cw, ca, feats, grad, proj.mean2d, proj.conic, gmap.opacities, W)
    offset = gmap.positions - obs.pose.position
    dist = np.maximum(np.linalg.norm(offset, axis=1, keepdims=True), 1e-12)
    g_pos = np.einsum("ni,nij->nj", g_mean, proj.jac) + g_feat[:, 3:4] * offset / dist
    return float(per_pixel.mean()), g_feat[:, :3], g_op, g_pos


class _Adam:
    def __init__(self, shape, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0

    def step(self, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad**2
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return self.lr * mhat / (np.sqrt(vhat) + self.eps)


def optimize_step(gmap: GaussianMap, keyframes: list[Observation], K: CameraIntrinsics,
                  iters: int = 10, lr: float = 0.01, lambda_c: float = 0.9,
                  depth_scale: float = 5.0, position_lr: float | None = None,
                  opacity_lr: float | None = None, prune: bool = True,
                  keyframes_per_iter: int | None = None, rng=None) -> OptimizeStats:
    """Adam descent on the mean keyframe loss; modifies ``gmap`` in place.

    ``stats.losses`` holds the mean loss evaluated at the start of each
    iteration, followed by the loss over all keyframes after the last
    update. With ``keyframes_per_iter`` each iteration uses the newest
    keyframe plus a random sample of the others.
    """
    if not keyframes:
        raise ValueError("optimize_step needs at least one keyframe")
    stats = OptimizeStats()

    def total():
        return float(np.mean([loss_and_grads(gmap, kf, K, lambda_c, depth_scale)[0]
                              for kf in keyframes]))

    if len(gmap) == 0 or iters <= 0:
        stats.losses.append(total() if len(gmap) else float("nan"))
        return stats
    n = len(gmap)
    adam_c = _Adam((n, 3), lr)
    adam_o = _Adam(n, opacity_lr if opacity_lr is not None else 2.5 * lr)
    adam_p = _Adam((n, 3), position_lr if position_lr is not None else 0.05 * lr)
    rng = rng if rng is not None else np.random.default_rng(0)
    for _ in range(iters):
        batch = keyframes
        if keyframes_per_iter is not None and len(keyframes) > keyframes_per_iter:
            older = rng.choice(len(keyframes) - 1, keyframes_per_iter - 1, replace=False)
            batch = [keyframes[i] for i in sorted(older)] + [keyframes[-1]]
        loss = 0.0
        gc = np.zeros((n, 3))
        go = np.zeros(n)
        gp = np.zeros((n, 3))
        for kf in batch:
            l, c, o, p = loss_and_grads(gmap, kf, K, lambda_c, depth_scale)
            loss += l
            gc += c
            go += o
            gp += p
        k = len(batch)
        stats.losses.append(loss / k)
        op = gmap.opacities
        step = adam_o.step(go / k * op * (1 - op))
        moved = step != 0
        logit = np.log(op[moved] / (1 - op[moved])) - step[moved]
        op = op.copy()
        op[moved] = np.clip(1.0 / (1.0 + np.exp(-logit)), OPACITY_MIN, OPACITY_MAX)
        gmap.opacities = op
        gmap.colors = np.clip(gmap.colors - adam_c.step(gc / k), 0.0, 1.0)
        gmap.positions = gmap.positions - adam_p.step(gp / k)
    stats.losses.append(total())
    if prune:
        keep = gmap.opacities >= PRUNE_OPACITY
        stats.pruned = int(n - keep.sum())
        if stats.pruned:
            pruned = gmap.subset(keep)
            for name in ("positions", "rotations", "scales", "colors", "opacities", "logodds"):
                setattr(gmap, name, getattr(pruned, name))
    return stats
