"""Gaussians, cameras, observations, map persistence and RGB-D spawning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

OPACITY_MIN = 1e-4
OPACITY_MAX = 1.0 - 1e-4
LOGODDS_CLAMP = 20.0

PLY_PROPERTIES = (
    "x", "y", "z",
    "rot_w", "rot_x", "rot_y", "rot_z",
    "scale_0", "scale_1", "scale_2",
    "opacity",
    "red", "green", "blue",
    "logodds_0", "logodds_1", "logodds_2", "logodds_3",
)


class MapFormatError(ValueError):
    """Raised when a map file cannot be parsed."""


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def sigmoid(x):
    """Logistic function; keeps full relative precision for very negative x."""
    return expit(np.asarray(x, dtype=np.float64))


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for (..., 4) quaternions in (w, x, y, z) order."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


@dataclass
class Gaussian:
    position: np.ndarray
    rotation: np.ndarray
    scales: np.ndarray
    color: np.ndarray
    opacity: float
    logodds: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(3)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(3)
        self.opacity = float(self.opacity)
        self.logodds = np.asarray(self.logodds, dtype=np.float64).reshape(4)
        if not 0.0 < self.opacity < 1.0:
            raise ValueError(f"opacity out of range: {self.opacity}")
        if np.any(self.scales <= 0):
            raise ValueError("scales must be strictly positive")
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-6:
            raise ValueError("rotation quaternion must have unit norm")

    @property
    def probabilities(self) -> np.ndarray:
        return sigmoid(self.logodds)


class GaussianMap:
    """Struct-of-arrays container for a set of Gaussians.

    Arrays are float64; ``positions`` (N,3), ``rotations`` (N,4) in wxyz
    order, ``scales`` (N,3), ``colors`` (N,3), ``opacities`` (N,),
    ``logodds`` (N,4) with one column per horizontal direction bucket.
    """

    def __init__(self, positions=None, rotations=None, scales=None,
                 colors=None, opacities=None, logodds=None, validate=True):
        n = 0 if positions is None else len(positions)
        self.positions = _arr(positions, (n, 3))
        self.rotations = _arr(rotations, (n, 4)) if rotations is not None else np.tile([1.0, 0, 0, 0], (n, 1))
        self.scales = _arr(scales, (n, 3))
        self.colors = _arr(colors, (n, 3))
        self.opacities = _arr(opacities, (n,))
        self.logodds = _arr(logodds, (n, 4)) if logodds is not None else np.zeros((n, 4))
        if validate:
            self.validate()

    @classmethod
    def empty(cls) -> "GaussianMap":
        return cls(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)),
                   np.zeros((0, 3)), np.zeros(0), np.zeros((0, 4)))

    @classmethod
    def from_gaussians(cls, gaussians) -> "GaussianMap":
        gaussians = list(gaussians)
        if not gaussians:
            return cls.empty()
        return cls(
            np.stack([g.position for g in gaussians]),
            np.stack([g.rotation for g in gaussians]),
            np.stack([g.scales for g in gaussians]),
            np.stack([g.color for g in gaussians]),
            np.array([g.opacity for g in gaussians]),
            np.stack([g.logodds for g in gaussians]),
        )

    def validate(self) -> None:
        n = len(self)
        for name in ("rotations", "scales", "colors", "opacities", "logodds"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        for name in ("positions", "rotations", "scales", "colors", "opacities", "logodds"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")
        if np.any((self.opacities <= 0) | (self.opacities >= 1)):
            raise ValueError("opacity out of range")
        if np.any(self.scales <= 0):
            raise ValueError("scales must be strictly positive")
        if n and np.max(np.abs(np.linalg.norm(self.rotations, axis=1) - 1.0)) > 1e-6:
            raise ValueError("rotation quaternions must have unit norm")

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(self.positions[i], self.rotations[i], self.scales[i],
                        self.colors[i], self.opacities[i], self.logodds[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def copy(self) -> "GaussianMap":
        return GaussianMap(self.positions.copy(), self.rotations.copy(),
                           self.scales.copy(), self.colors.copy(),
                           self.opacities.copy(), self.logodds.copy(),
                           validate=False)

    def subset(self, index) -> "GaussianMap":
        return GaussianMap(self.positions[index], self.rotations[index],
                           self.scales[index], self.colors[index],
                           self.opacities[index], self.logodds[index],
                           validate=False)

    def extend(self, other: "GaussianMap") -> None:
        for name in ("positions", "rotations", "scales", "colors", "opacities", "logodds"):
            setattr(self, name, np.concatenate([getattr(self, name), getattr(other, name)]))

    def covariances(self) -> np.ndarray:
        R = quat_to_rotmat(self.rotations)
        M = R * self.scales[:, None, :]
        return M @ np.swapaxes(M, -1, -2)

    def probabilities(self) -> np.ndarray:
        return sigmoid(self.logodds)

    def equals(self, other: "GaussianMap") -> bool:
        return len(self) == len(other) and all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("positions", "rotations", "scales", "colors", "opacities", "logodds"))


def _arr(a, shape):
    if a is None:
        return np.zeros(shape)
    out = np.array(a, dtype=np.float64)
    return out.reshape(shape) if out.size == np.prod(shape) else out


@dataclass
class Viewpoint:
    """Camera pose as quadrotor flat outputs plus derivatives."""

    position: np.ndarray
    yaw: float = 0.0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    jerk: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw_rate: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=np.float64).reshape(3)
        self.acceleration = np.asarray(self.acceleration, dtype=np.float64).reshape(3)
        self.jerk = np.asarray(self.jerk, dtype=np.float64).reshape(3)
        self.yaw = wrap_angle(float(self.yaw))
        self.yaw_rate = float(self.yaw_rate)
        for v in (self.position, self.velocity, self.acceleration, self.jerk):
            if not np.all(np.isfinite(v)):
                raise ValueError("viewpoint fields must be finite")

    @classmethod
    def from_string(cls, text: str) -> "Viewpoint":
        vals = [float(v) for v in text.replace(" ", "").split(",")]
        if len(vals) != 4:
            raise ValueError(f"pose needs 'x,y,z,yaw', got {text!r}")
        return cls(vals[:3], vals[3])

    def at_rest(self) -> "Viewpoint":
        return Viewpoint(self.position.copy(), self.yaw)

    def rotation_world_from_camera(self) -> np.ndarray:
        """Columns are the optical x (right), y (down), z (forward) axes in world."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        forward = np.array([c, s, 0.0])
        left = np.array([-s, c, 0.0])
        up = np.array([0.0, 0.0, 1.0])
        return np.stack([-left, -up, forward], axis=1)

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        R = self.rotation_world_from_camera()
        return (np.asarray(points, dtype=np.float64) - self.position) @ R


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    near: float = 0.1
    far: float = 20.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not 0 < self.near < self.far:
            raise ValueError("need 0 < near < far")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float = 90.0,
                 near: float = 0.1, far: float = 20.0) -> "CameraIntrinsics":
        f = 0.5 * width / math.tan(math.radians(hfov_deg) / 2)
        return cls(width, height, f, f, (width - 1) / 2, (height - 1) / 2, near, far)

    def project(self, points_cam: np.ndarray) -> np.ndarray:
        p = np.asarray(points_cam, dtype=np.float64)
        return np.stack([self.fx * p[..., 0] / p[..., 2] + self.cx,
                         self.fy * p[..., 1] / p[..., 2] + self.cy], axis=-1)

    def ray_directions(self) -> np.ndarray:
        """Unit ray per pixel in the camera frame, shape (H, W, 3)."""
        u, v = np.meshgrid(np.arange(self.width), np.arange(self.height))
        d = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy,
                      np.ones_like(u, dtype=np.float64)], axis=-1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass
class Observation:
    """Color image in [0,1], ray-distance depth in meters (0 = invalid)."""

    color: np.ndarray
    depth: np.ndarray
    pose: Viewpoint

    def __post_init__(self):
        self.color = np.asarray(self.color, dtype=np.float64)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.color.ndim != 3 or self.color.shape[2] != 3:
            raise ValueError("color must be H x W x 3")
        if self.depth.shape != self.color.shape[:2]:
            raise ValueError("depth and color dimensions differ")

    def check(self, K: CameraIntrinsics) -> None:
        if self.depth.shape != (K.height, K.width):
            raise ValueError("observation size does not match intrinsics")


# --- persistence -----------------------------------------------------------

def save_map(gmap: GaussianMap, path) -> None:
    """Write a binary little-endian PLY with float32 vertex properties."""
    n = len(gmap)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in PLY_PROPERTIES]
    header.append("end_header")
    body = np.concatenate([
        gmap.positions, gmap.rotations, gmap.scales, gmap.opacities[:, None],
        gmap.colors, gmap.logodds], axis=1).astype("<f4")
    try:
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(body.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write map {path}: {exc}") from exc


def load_map(path) -> GaussianMap:
    raw = Path(path).read_bytes()
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply\n") or end < 0:
        raise MapFormatError(f"{path}: missing ply magic or end_header")
    lines = raw[:end].decode("ascii", errors="replace").splitlines()
    count = None
    props = []
    for lineno, line in enumerate(lines, 1):
        tok = line.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            continue
        if tok[0] == "format":
            if tok[1:2] != ["binary_little_endian"]:
                raise MapFormatError(f"{path}: line {lineno}: unsupported format {line!r}")
        elif tok[0] == "element":
            if len(tok) != 3 or tok[1] != "vertex" or count is not None:
                raise MapFormatError(f"{path}: line {lineno}: unexpected element {line!r}")
            try:
                count = int(tok[2])
            except ValueError:
                raise MapFormatError(f"{path}: line {lineno}: bad vertex count") from None
        elif tok[0] == "property":
            if len(tok) != 3 or tok[1] != "float":
                raise MapFormatError(f"{path}: line {lineno}: property must be float: {line!r}")
            props.append(tok[2])
        else:
            raise MapFormatError(f"{path}: line {lineno}: unrecognised header line {line!r}")
    if count is None:
        raise MapFormatError(f"{path}: no vertex element")
    if tuple(props) != PLY_PROPERTIES:
        raise MapFormatError(f"{path}: field mismatch, expected {len(PLY_PROPERTIES)} "
                             f"properties {PLY_PROPERTIES}, got {tuple(props)}")
    body = raw[end + len(b"end_header\n"):]
    width = len(PLY_PROPERTIES) * 4
    if len(body) != count * width:
        raise MapFormatError(f"{path}: body holds {len(body)} bytes, header declares "
                             f"{count} records of {width} bytes")
    data = np.frombuffer(body, dtype="<f4").reshape(count, len(PLY_PROPERTIES)).astype(np.float64)
    bad = ~np.isfinite(data)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise MapFormatError(f"{path}: record {row}: non-finite value in field {PLY_PROPERTIES[col]}")
    op = data[:, 10]
    if np.any((op <= 0) | (op >= 1)):
        row = int(np.flatnonzero((op <= 0) | (op >= 1))[0])
        raise MapFormatError(f"{path}: record {row}: opacity out of range ({op[row]})")
    if np.any(data[:, 7:10] <= 0):
        raise MapFormatError(f"{path}: non-positive scale")
    rot = data[:, 3:7]
    norms = np.linalg.norm(rot, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-5):
        row = int(np.flatnonzero(np.abs(norms - 1.0) > 1e-5)[0])
        raise MapFormatError(f"{path}: record {row}: rotation quaternion is not unit length")
    return GaussianMap(data[:, 0:3], rot, data[:, 7:10],
                       data[:, 11:14], np.clip(op, OPACITY_MIN, OPACITY_MAX),
                       data[:, 14:18])


def backproject_spawn(obs: Observation, K: CameraIntrinsics, stride: int = 4,
                      init_opacity: float = 0.5, mask=None) -> GaussianMap:
    """Spawn one isotropic Gaussian per valid-depth pixel on a stride grid.

    ``mask`` optionally restricts spawning to pixels where it is true (used
    by the active loop to fill only regions the map does not yet cover).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not 0.0 < init_opacity < 1.0:
        raise ValueError("init_opacity must lie in (0, 1)")
    obs.check(K)
    vs, us = np.mgrid[0:K.height:stride, 0:K.width:stride]
    depth = obs.depth[vs, us]
    keep = (depth > 0) & (depth >= K.near) & (depth <= K.far)
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)[vs, us]
    us, vs, depth = us[keep], vs[keep], depth[keep]
    if len(depth) == 0:
        return GaussianMap.empty()
    rays = np.stack([(us - K.cx) / K.fx, (vs - K.cy) / K.fy, np.ones_like(depth)], axis=1)
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    pts_cam = rays * depth[:, None]
    R = obs.pose.rotation_world_from_camera()
    pts = pts_cam @ R.T + obs.pose.position
    s = stride * depth / K.fx
    n = len(depth)
    return GaussianMap(
        pts, np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)), np.repeat(s[:, None], 3, axis=1),
        np.clip(obs.color[vs, us], 0.0, 1.0), np.full(n, init_opacity), np.zeros((n, 4)))
