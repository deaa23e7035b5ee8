"""Forward Gaussian-splat rasterization.

Gaussians are depth-sorted once per view (no tiling) by their ray distance
from the camera, then alpha-blended front to back. The blending kernel is
generic over per-Gaussian feature vectors so the same weights render color,
depth, and any per-Gaussian scalar (log-odds increments, information gain).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .scene import CameraIntrinsics, Gaussian, GaussianMap, Viewpoint

COV2D_REG = 0.3
FOOTPRINT_SIGMAS = 3.0


@dataclass
class Projected2D:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth_along_ray: float
    gaussian_index: int


@dataclass
class Projection:
    """Batch projection of a map into one view."""

    mean2d: np.ndarray      # (N, 2)
    cov2d: np.ndarray       # (N, 2, 2)
    conic: np.ndarray       # (N, 3) inverse covariance (a, b, c)
    depth: np.ndarray       # (N,) ray distance
    points_cam: np.ndarray  # (N, 3)
    bbox: np.ndarray        # (N, 4) int: u0, v0, u1, v1 (exclusive upper)
    visible: np.ndarray     # (N,) bool
    jac: np.ndarray         # (N, 2, 3) d(mean2d)/d(world position)

    def order(self) -> np.ndarray:
        idx = np.flatnonzero(self.visible)
        return idx[np.argsort(self.depth[idx], kind="stable")].astype(np.int64)


def project_map(gmap: GaussianMap, view: Viewpoint, K: CameraIntrinsics) -> Projection:
    n = len(gmap)
    R_wc = view.rotation_world_from_camera()
    pc = (gmap.positions - view.position) @ R_wc
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    depth = np.linalg.norm(pc, axis=1)
    front = z > K.near
    zs = np.where(front, z, 1.0)
    # clamp the Jacobian's evaluation point to a margin around the frustum
    lim_x = 1.3 * (max(K.cx, K.width - 1 - K.cx) + 0.5) / K.fx
    lim_y = 1.3 * (max(K.cy, K.height - 1 - K.cy) + 0.5) / K.fy
    tx = np.clip(x / zs, -lim_x, lim_x) * zs
    ty = np.clip(y / zs, -lim_y, lim_y) * zs
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = K.fx / zs
    J[:, 0, 2] = -K.fx * tx / zs**2
    J[:, 1, 1] = K.fy / zs
    J[:, 1, 2] = -K.fy * ty / zs**2
    cov_cam = R_wc.T @ gmap.covariances() @ R_wc
    cov2d = J @ cov_cam @ np.swapaxes(J, 1, 2)
    cov2d[:, 0, 0] += COV2D_REG
    cov2d[:, 1, 1] += COV2D_REG
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    conic = np.stack([cov2d[:, 1, 1] / det, -cov2d[:, 0, 1] / det, cov2d[:, 0, 0] / det], axis=1)
    mean2d = np.stack([K.fx * x / zs + K.cx, K.fy * y / zs + K.cy], axis=1)
    mid = 0.5 * (cov2d[:, 0, 0] + cov2d[:, 1, 1])
    lam = mid + np.sqrt(np.maximum(mid**2 - det, 0.0))
    radius = np.ceil(FOOTPRINT_SIGMAS * np.sqrt(lam))
    with np.errstate(invalid="ignore"):
        u0 = np.clip(np.floor(mean2d[:, 0] - radius), 0, K.width)
        u1 = np.clip(np.ceil(mean2d[:, 0] + radius) + 1, 0, K.width)
        v0 = np.clip(np.floor(mean2d[:, 1] - radius), 0, K.height)
        v1 = np.clip(np.ceil(mean2d[:, 1] + radius) + 1, 0, K.height)
    visible = front & (depth <= K.far) & (u1 > u0) & (v1 > v0) & (det > 0)
    bbox = np.stack([u0, v0, u1, v1], axis=1)
    bbox[~visible] = 0
    # exact pinhole derivative (no clamp) for the position gradient
    Jp = np.zeros((n, 2, 3))
    Jp[:, 0, 0] = K.fx / zs
    Jp[:, 0, 2] = -K.fx * x / zs**2
    Jp[:, 1, 1] = K.fy / zs
    Jp[:, 1, 2] = -K.fy * y / zs**2
    return Projection(mean2d, cov2d, conic, depth, pc, bbox.astype(np.int64),
                      visible, Jp @ R_wc.T)


def project_gaussian(g: Gaussian, view: Viewpoint, K: CameraIntrinsics,
                     index: int = 0) -> Projected2D | None:
    proj = project_map(GaussianMap.from_gaussians([g]), view, K)
    if not proj.visible[0]:
        return None
    return Projected2D(proj.mean2d[0], proj.cov2d[0], float(proj.depth[0]), index)


@dataclass
class RenderOutput:
    color: np.ndarray        # (H, W, 3)
    depth: np.ndarray        # (H, W) blended ray distance, unnormalised
    residual_T: np.ndarray   # (H, W)
    contrib_pixel: np.ndarray     # flat pixel index per contribution
    contrib_gaussian: np.ndarray  # Gaussian index per contribution
    contrib_weight: np.ndarray    # transmittance weight T^[i]
    contrib_alpha: np.ndarray
    scalar: np.ndarray | None = None
    evaluated_pairs: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    @property
    def coverage(self) -> np.ndarray:
        return 1.0 - self.residual_T

    def normalized_depth(self, min_coverage: float = 1e-6) -> np.ndarray:
        """Depth divided by accumulated opacity; 0 where nothing is hit."""
        cov = self.coverage
        out = np.zeros_like(self.depth)
        ok = cov > min_coverage
        out[ok] = self.depth[ok] / cov[ok]
        return out

    def contributions_at(self, u: int, v: int) -> list[tuple[int, float]]:
        """Ordered (gaussian_index, weight) list for one pixel."""
        p = v * self.depth.shape[1] + u
        sel = self.contrib_pixel == p
        return list(zip(self.contrib_gaussian[sel].tolist(), self.contrib_weight[sel].tolist()))


def _capacity(proj: Projection) -> int:
    b = proj.bbox
    return int(np.sum((b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])))


def rasterize(gmap: GaussianMap, view: Viewpoint, K: CameraIntrinsics,
              per_gaussian_scalar=None, record: bool = True,
              projection: Projection | None = None) -> RenderOutput:
    """Render color, depth and transmittance weights for one view.

    With ``per_gaussian_scalar`` the same weights also produce
    ``out.scalar = sum_i s_i T_i`` per pixel. ``record=False`` skips
    storing the contribution list (faster when only images are needed).
    """
    H, W = K.height, K.width
    n = len(gmap)
    if n == 0:
        empty_i = np.zeros(0, np.int32)
        scalar = np.zeros((H, W)) if per_gaussian_scalar is not None else None
        return RenderOutput(np.zeros((H, W, 3)), np.zeros((H, W)), np.ones((H, W)),
                            empty_i, empty_i, np.zeros(0), np.zeros(0), scalar, 0)
    proj = projection or project_map(gmap, view, K)
    cols = [gmap.colors, proj.depth[:, None]]
    if per_gaussian_scalar is not None:
        s = np.asarray(per_gaussian_scalar, dtype=np.float64).reshape(n, 1)
        cols.append(s)
    feats = np.ascontiguousarray(np.concatenate(cols, axis=1))
    img, trans, cp, cg, cw, ca, evaluated = _kernels.blend_forward(
        proj.order(), proj.mean2d, proj.conic, gmap.opacities, feats,
        proj.bbox, W, H, record, _capacity(proj) if record else 0)
    img = img.reshape(H, W, -1)
    scalar = img[..., 4].copy() if per_gaussian_scalar is not None else None
    return RenderOutput(img[..., :3].copy(), img[..., 3].copy(), trans.reshape(H, W),
                        cp, cg, cw, ca, scalar, int(evaluated))
