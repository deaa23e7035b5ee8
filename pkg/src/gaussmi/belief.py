"""Per-Gaussian reliability belief: loss image, inverse sensor model,
log-odds Bayesian update over four horizontal direction buckets, and the
termination statistic."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .renderer import RenderOutput, rasterize
from .scene import (LOGODDS_CLAMP, CameraIntrinsics, Gaussian, GaussianMap,
                    Observation, Viewpoint, sigmoid)

LOSS_FLOOR = 1e-6


@dataclass
class LossImage:
    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("loss image must be finite and non-negative")

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass
class BeliefUpdateReport:
    updated_count: int
    mean_abs_delta_logodds: float
    loss_mean: float


def loss_image(render: RenderOutput, obs: Observation, lambda_c: float = 0.9,
               depth_scale: float = 5.0) -> LossImage:
    """Per-pixel L1 color/depth loss.

    Color error is averaged over channels; depth error compares the
    opacity-normalised rendered depth with the observed depth and is
    divided by ``depth_scale``. Pixels without valid observed depth use
    the color term alone.
    """
    if render.color.shape != obs.color.shape or render.depth.shape != obs.depth.shape:
        raise ValueError(f"render {render.color.shape} and observation "
                         f"{obs.color.shape} dimensions differ")
    color_err = np.abs(render.color - obs.color).mean(axis=2)
    depth_err = np.abs(render.normalized_depth() - obs.depth) / depth_scale
    valid = obs.depth > 0
    values = np.where(valid, lambda_c * color_err + (1.0 - lambda_c) * depth_err, color_err)
    return LossImage(values)


def inverse_sensor_probability(T, L, lambda_L: float = 1.7, lambda_T: float = 7.0):
    """P(r | Z) = 1 / ((lambda_L L)^(lambda_T T) + 1), loss floored at 1e-6."""
    T = np.asarray(T, dtype=np.float64)
    L = np.maximum(np.asarray(L, dtype=np.float64), LOSS_FLOOR)
    # exponent form keeps the T = 0 and lambda_L L = 1 fixed points exact
    out = 1.0 / (np.exp(lambda_T * T * np.log(lambda_L * L)) + 1.0)
    return float(out) if out.ndim == 0 else out


def logodds_increment(T, L, lambda_L: float = 1.7, lambda_T: float = 7.0):
    """log of the inverse sensor odds ratio: -lambda_T T log(lambda_L L)."""
    L = np.maximum(np.asarray(L, dtype=np.float64), LOSS_FLOOR)
    return -lambda_T * np.asarray(T, dtype=np.float64) * np.log(lambda_L * L)


def direction_buckets(view_position, positions, yaw: float = 0.0) -> np.ndarray:
    """Quadrant index of the horizontal bearing from each Gaussian to the camera."""
    d = np.asarray(view_position, dtype=np.float64)[:2] - np.atleast_2d(positions)[:, :2]
    bearing = np.arctan2(d[:, 1], d[:, 0])
    flat = (d[:, 0] == 0) & (d[:, 1] == 0)
    bearing = np.where(flat, yaw, bearing)
    shifted = np.mod(bearing + math.pi / 4, 2 * math.pi)
    return np.minimum((shifted // (math.pi / 2)).astype(np.int64), 3)


def direction_bucket(view: Viewpoint, g: Gaussian) -> int:
    return int(direction_buckets(view.position, g.position[None], view.yaw)[0])


def accumulate_logodds(render: RenderOutput, loss: LossImage, n_gaussians: int,
                       lambda_L: float, lambda_T: float) -> np.ndarray:
    """Sum over a view's contributions of -lambda_T T log(lambda_L L_pixel)."""
    flat_loss = loss.values.reshape(-1)
    inc = logodds_increment(render.contrib_weight, flat_loss[render.contrib_pixel],
                            lambda_L, lambda_T)
    return np.bincount(render.contrib_gaussian, weights=inc, minlength=n_gaussians)


def update_probabilities(gmap: GaussianMap, obs: Observation, K: CameraIntrinsics,
                         cfg: SystemConfig, render: RenderOutput | None = None
                         ) -> BeliefUpdateReport:
    """Bayesian log-odds update of ``gmap`` in place from one observation."""
    if len(gmap) == 0:
        return BeliefUpdateReport(0, 0.0, 0.0)
    if render is None:
        render = rasterize(gmap, obs.pose, K)
    loss = loss_image(render, obs, cfg.lambda_c, cfg.resolved_depth_scale())
    delta = accumulate_logodds(render, loss, len(gmap), cfg.lambda_L, cfg.lambda_T)
    buckets = direction_buckets(obs.pose.position, gmap.positions, obs.pose.yaw)
    rows = np.arange(len(gmap))
    before = gmap.logodds[rows, buckets].copy()
    gmap.logodds[rows, buckets] = np.clip(before + delta, -LOGODDS_CLAMP, LOGODDS_CLAMP)
    touched = np.zeros(len(gmap), bool)
    touched[render.contrib_gaussian] = True
    applied = gmap.logodds[rows, buckets] - before
    return BeliefUpdateReport(int(touched.sum()),
                              float(np.abs(applied[touched]).mean()) if touched.any() else 0.0,
                              loss.mean())


def mean_reliability(g) -> float | np.ndarray:
    """Average reliable probability over the four direction buckets."""
    if isinstance(g, GaussianMap):
        return sigmoid(g.logodds).mean(axis=1)
    return float(sigmoid(g.logodds).mean())


def done_fraction(gmap: GaussianMap, tau: float = 0.7) -> float:
    if len(gmap) == 0:
        return 0.0
    return float(np.mean(mean_reliability(gmap) > tau))


def terminated(gmap: GaussianMap, cfg: SystemConfig) -> bool:
    if len(gmap) == 0:
        return False
    return done_fraction(gmap, cfg.tau) > cfg.phi
