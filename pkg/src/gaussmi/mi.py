"""Expected Shannon mutual information between the Gaussian reliability
variables and a hypothetical observation from a candidate view."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .renderer import Projection, project_map, rasterize
from .scene import CameraIntrinsics, GaussianMap, Viewpoint

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SensorNoiseModel:
    """Luminance-dependent noise: variance a * (M / 255) + b."""

    kind: str = "poissonian_gaussian"
    a: float = 0.01
    b: float = 0.0001

    def __post_init__(self):
        if self.kind not in ("uniform", "poissonian_gaussian"):
            raise ValueError(f"unknown noise model {self.kind!r}")
        if self.kind == "poissonian_gaussian" and (self.a < 0 or self.b <= 0):
            raise ValueError("poissonian_gaussian needs a >= 0 and b > 0")

    @classmethod
    def from_config(cls, cfg) -> "SensorNoiseModel":
        return cls(cfg.noise_kind, cfg.noise_a, cfg.noise_b)

    def sigma(self, M):
        """Noise standard deviation in [0, 1] color units at luminance M."""
        M = np.asarray(M, dtype=np.float64)
        if self.kind == "uniform":
            return np.full_like(M, np.sqrt(self.b))
        return np.sqrt(self.a * M / 255.0 + self.b)


@dataclass
class MIResult:
    total_mi: float
    mi_image: np.ndarray
    gaussians_touched: int
    contributions: int = 0


def info_gain_full(delta, odds):
    """f(delta, o) = o / (o + 1/delta) * log((o + 1) / (o + 1/delta))."""
    delta = np.asarray(delta, dtype=np.float64)
    odds = np.asarray(odds, dtype=np.float64)
    inv = 1.0 / delta
    out = odds / (odds + inv) * np.log((odds + 1.0) / (odds + inv))
    return float(out) if out.ndim == 0 else out


def info_gain_expected(P):
    """Gain when the candidate observation is assumed loss-free: -log P."""
    out = -np.log(np.asarray(P, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def info_gain_from_logodds(l):
    """-log sigmoid(l) = log(1 + exp(-l)), stable for any l."""
    return np.logaddexp(0.0, -np.asarray(l, dtype=np.float64))


def luminance(rgb):
    """Luminance in [0, 255] from RGB in [0, 1]."""
    return 255.0 * (np.asarray(rgb, dtype=np.float64) @ LUMA)


def measurement_prior(M, model: SensorNoiseModel = SensorNoiseModel()):
    """P(z | M), normalised to 1 at zero luminance."""
    M = np.asarray(M, dtype=np.float64)
    if model.kind == "uniform" or model.a == 0:
        out = np.ones_like(M)
    else:
        out = np.sqrt(model.b) / np.sqrt(model.a * M / 255.0 + model.b)
    return float(out) if out.ndim == 0 else out


def view_information_gain(gmap: GaussianMap, view: Viewpoint) -> np.ndarray:
    """Per-Gaussian -log P(r) using the bucket facing ``view``."""
    from .belief import direction_buckets

    b = direction_buckets(view.position, gmap.positions, view.yaw)
    return info_gain_from_logodds(gmap.logodds[np.arange(len(gmap)), b])


def evaluate_gauss_mi(gmap: GaussianMap, view: Viewpoint, K: CameraIntrinsics,
                      model: SensorNoiseModel = SensorNoiseModel(),
                      projection: Projection | None = None) -> MIResult:
    if len(gmap) == 0:
        return MIResult(0.0, np.zeros((K.height, K.width)), 0, 0)
    proj = projection or project_map(gmap, view, K)
    gain = view_information_gain(gmap, view)
    out = rasterize(gmap, view, K, per_gaussian_scalar=gain, record=False, projection=proj)
    prior = measurement_prior(luminance(out.color), model)
    mi_image = prior * out.scalar
    return MIResult(float(mi_image.sum()), mi_image, int(proj.visible.sum()),
                    out.evaluated_pairs)
