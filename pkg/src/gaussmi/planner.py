"""Viewpoint primitive library and next-best-view selection.

Each candidate viewpoint comes from propagating a constant body-frame
action for a fixed duration; the path to it is a closed-form
minimum-snap 7th-order polynomial per axis with all final derivatives up
to jerk set to zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .config import SystemConfig
from .mi import MIResult, SensorNoiseModel, evaluate_gauss_mi
from .scene import CameraIntrinsics, GaussianMap, Viewpoint, wrap_angle


class PlannerDeadlock(RuntimeError):
    """No candidate primitive passed the safety check."""


@dataclass(frozen=True)
class Action:
    v_xy: float
    v_z: float
    omega_z: float


def action_space(cfg: SystemConfig) -> list[Action]:
    if not (cfg.V_xy and cfg.V_z and cfg.Omega_z):
        raise ValueError("action sample sets must be non-empty")
    return [Action(float(a), float(b), float(c))
            for a, b, c in itertools.product(cfg.V_xy, cfg.V_z, cfg.Omega_z)]


def propagate(sigma0: Viewpoint, a: Action, T: float) -> Viewpoint:
    """Next viewpoint after applying ``a`` for ``T`` seconds, at rest."""
    if T <= 0:
        raise ValueError("duration must be positive")
    heading = sigma0.yaw + a.omega_z * T
    delta = np.array([-a.v_xy * T * math.sin(heading),
                      a.v_xy * T * math.cos(heading),
                      a.v_z * T])
    return Viewpoint(sigma0.position + delta, sigma0.yaw + a.omega_z * T)


# 1/T^7 * M(T) @ (dp, dv, da, dj) gives (alpha, beta, gamma, delta)
def _coef_matrix(T: float) -> np.ndarray:
    return np.array([
        [-33600.0, 16800.0 * T, -3360.0 * T**2, 280.0 * T**3],
        [16800.0 * T, -8160.0 * T**2, 1560.0 * T**3, -120.0 * T**4],
        [-3360.0 * T**2, 1560.0 * T**3, -280.0 * T**4, 20.0 * T**5],
        [280.0 * T**3, -120.0 * T**4, 20.0 * T**5, -4.0 / 3.0 * T**6],
    ]) / T**7


def min_snap_coefficients(x0, xf, T: float) -> np.ndarray:
    """(alpha, beta, gamma, delta) for one axis from (p, v, a, j) endpoints."""
    p0, v0, a0, j0 = (float(v) for v in x0)
    pf, vf, af, jf = (float(v) for v in xf)
    d = np.array([
        pf - p0 - v0 * T - 0.5 * a0 * T**2 - j0 * T**3 / 6.0,
        vf - v0 - a0 * T - 0.5 * j0 * T**2,
        af - a0 - j0 * T,
        jf - j0,
    ])
    return _coef_matrix(T) @ d


def axis_cost(coef, T: float) -> float:
    """Closed form of (1/T) * integral_0^T snap(t)^2 dt for one axis."""
    al, be, ga, de = coef
    return float(al**2 * T**6 / 28 + al * be * T**5 / 4
                 + (9 * be**2 / 20 + 3 * al * ga / 5) * T**4
                 + (3 * al * de / 4 + 9 * be * ga / 4) * T**3
                 + (3 * ga**2 + 3 * be * de) * T**2
                 + 9 * ga * de * T + 9 * de**2)


@dataclass
class MotionPrimitive:
    """Per-axis (x, y, z, yaw) minimum-snap polynomials."""

    coefficients: np.ndarray   # (4, 4): rows x, y, z, yaw; cols alpha..delta
    initial: np.ndarray        # (4, 4): rows x, y, z, yaw; cols p, v, a, j
    duration: float
    snap_cost: float

    def monomials(self) -> np.ndarray:
        """(4, 8) coefficients of t^0..t^7 for the position polynomials."""
        al, be, ga, de = self.coefficients.T
        p0, v0, a0, j0 = self.initial.T
        return np.stack([p0, v0, a0 / 2, j0 / 6, de / 8, ga / 40, be / 240, al / 1680], axis=1)

    def states(self, ts, order: int = 0) -> np.ndarray:
        """Derivative ``order`` of (x, y, z, yaw) at times ``ts``, shape (len(ts), 4)."""
        c = self.monomials()
        k = np.arange(8)
        for _ in range(order):
            c = c[:, 1:] * k[1:len(c[0]) + 1]
            k = k[:-1]
        ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
        powers = ts[:, None] ** np.arange(c.shape[1])
        return powers @ c.T

    def state(self, t: float, order: int) -> np.ndarray:
        return self.states([t], order)[0]

    def snap(self, t):
        al, be, ga, de = self.coefficients[:3].T
        t = np.asarray(t, dtype=np.float64)[..., None]
        return 0.5 * al * t**3 + 1.5 * be * t**2 + 3 * ga * t + 3 * de


def min_snap_primitive(x0, xf, T: float, yaw0=(0.0, 0.0, 0.0, 0.0),
                       yawf=None, normalized: bool = False) -> MotionPrimitive:
    """Build the primitive from per-axis (p, v, a, j) endpoint states.

    ``x0``, ``xf`` are (3, 4) arrays (axes x, y, z). The yaw axis uses the
    same polynomial family but is excluded from the snap cost.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(3, 4)
    xf = np.asarray(xf, dtype=np.float64).reshape(3, 4)
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(xf)) and math.isfinite(T)):
        raise ValueError("non-finite endpoint state")
    if T <= 0:
        raise ValueError("duration must be positive")
    yaw0 = np.asarray(yaw0, dtype=np.float64)
    yawf = np.array([yaw0[0], 0.0, 0.0, 0.0]) if yawf is None else np.asarray(yawf, dtype=np.float64)
    coefs = np.stack([min_snap_coefficients(x0[k], xf[k], T) for k in range(3)]
                     + [min_snap_coefficients(yaw0, yawf, T)])
    prim = MotionPrimitive(coefs, np.vstack([x0, yaw0]), T, 0.0)
    prim.snap_cost = primitive_cost(prim, normalized)
    return prim


def primitive_cost(prim: MotionPrimitive, normalized: bool = False) -> float:
    """Sum over x, y, z of the integral of squared snap.

    The closed-form polynomial evaluates the duration-normalised cost
    (1/T) * integral; ``normalized=False`` multiplies back by T.
    """
    T = prim.duration
    J = sum(axis_cost(prim.coefficients[k], T) for k in range(3))
    return J if normalized else J * T


def primitive_between(sigma0: Viewpoint, sigma_f: Viewpoint, T: float,
                      normalized: bool = False) -> MotionPrimitive:
    x0 = np.stack([sigma0.position, sigma0.velocity, sigma0.acceleration, sigma0.jerk], axis=1)
    xf = np.stack([sigma_f.position, sigma_f.velocity, sigma_f.acceleration, sigma_f.jerk], axis=1)
    # continuous yaw target so the polynomial takes the short way round
    yaw_f = sigma0.yaw + wrap_angle(sigma_f.yaw - sigma0.yaw)
    return min_snap_primitive(x0, xf, T, (sigma0.yaw, sigma0.yaw_rate, 0.0, 0.0),
                              (yaw_f, sigma_f.yaw_rate, 0.0, 0.0), normalized)


def primitive_sample(prim: MotionPrimitive, t: float) -> Viewpoint:
    if not 0.0 <= t <= prim.duration:
        raise ValueError(f"t={t} outside [0, {prim.duration}]")
    pos, vel, acc, jerk = (prim.state(t, k) for k in range(4))
    return Viewpoint(pos[:3], pos[3], vel[:3], acc[:3], jerk[:3], vel[3])


def primitive_positions(prim: MotionPrimitive, n: int = 21) -> np.ndarray:
    return prim.states(np.linspace(0.0, prim.duration, n))[:, :3]


def path_length(prim: MotionPrimitive, n: int = 21) -> float:
    pts = primitive_positions(prim, n)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


class SafetyChecker:
    """Clearance test against opaque Gaussian centres plus a workspace box."""

    def __init__(self, gmap: GaussianMap, cfg: SystemConfig):
        pts = gmap.positions[gmap.opacities > 0.5]
        self.tree = cKDTree(pts) if len(pts) else None
        self.radius = cfg.clearance_radius
        self.lo = np.asarray(cfg.workspace_min, dtype=np.float64)
        self.hi = np.asarray(cfg.workspace_max, dtype=np.float64)

    def __call__(self, prim: MotionPrimitive) -> bool:
        pts = primitive_positions(prim, 21)
        # the start state is given, not chosen: it is exempt from the box
        # test, and when it already violates the clearance (the map grew
        # around the agent) the path may not get any closer than it is
        if np.any(pts[1:] < self.lo) or np.any(pts[1:] > self.hi):
            return False
        if self.tree is None:
            return True
        dist, _ = self.tree.query(pts)
        return bool(np.all(dist[1:] >= min(self.radius, dist[0])))


def safety_check(prim: MotionPrimitive, gmap: GaussianMap, cfg: SystemConfig) -> bool:
    return SafetyChecker(gmap, cfg)(prim)


@dataclass
class Candidate:
    index: int
    action: Action
    viewpoint: Viewpoint
    primitive: MotionPrimitive
    safe: bool
    mi: MIResult | None = None
    reward: float = -math.inf


def evaluate_candidates(gmap: GaussianMap, state: Viewpoint, cfg: SystemConfig,
                        K: CameraIntrinsics, with_mi: bool = True) -> list[Candidate]:
    checker = SafetyChecker(gmap, cfg)
    model = SensorNoiseModel.from_config(cfg)
    out = []
    for idx, a in enumerate(action_space(cfg)):
        vp = propagate(state, a, cfg.T)
        prim = primitive_between(state, vp, cfg.T, cfg.cost_normalized)
        cand = Candidate(idx, a, vp, prim, checker(prim))
        if cand.safe and with_mi:
            cand.mi = evaluate_gauss_mi(gmap, vp, K, model)
            cand.reward = cfg.w_I * cand.mi.total_mi - cfg.w_J * prim.snap_cost
        out.append(cand)
    return out


def reward_argmax(mi, cost, w_I: float, w_J: float, safe=None) -> tuple[int, np.ndarray]:
    """Rewards R = w_I*I - w_J*J and the index of the best safe entry.

    Unsafe entries get reward -inf; ties go to the lowest index.
    """
    mi = np.asarray(mi, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    R = w_I * mi - w_J * cost
    ok = np.ones(R.shape, bool) if safe is None else np.asarray(safe, bool)
    if not ok.any():
        raise PlannerDeadlock("no safe motion primitive in the action space")
    R = np.where(ok, R, -np.inf)
    return int(np.argmax(R)), R


def choose_best(candidates: list[Candidate]) -> Candidate:
    """Highest reward among safe candidates, ties to the lowest index."""
    safe = [c for c in candidates if c.safe]
    if not safe:
        raise PlannerDeadlock("no safe motion primitive in the action space")
    return min(safe, key=lambda c: (-c.reward, c.index))


def select_nbv(gmap: GaussianMap, state: Viewpoint, cfg: SystemConfig,
               K: CameraIntrinsics) -> tuple[MotionPrimitive, float, MIResult]:
    best = choose_best(evaluate_candidates(gmap, state, cfg, K))
    return best.primitive, best.reward, best.mi
