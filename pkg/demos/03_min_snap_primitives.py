"""
Minimum-snap motion primitives
==============================

Each candidate action (horizontal speed, vertical speed, yaw rate) is
propagated for T seconds and joined to the current state by a closed-form
7th-order polynomial per axis. Its integrated squared snap is the motion cost.
"""

import numpy as np

from gaussmi import SystemConfig, Viewpoint, action_space, min_snap_primitive, propagate
from gaussmi.planner import min_snap_coefficients, primitive_between, path_length

# the textbook case: one metre from rest to rest in one second
coef = min_snap_coefficients([0, 0, 0, 0], [1, 0, 0, 0], 1.0)
print("rest-to-rest coefficients (alpha, beta, gamma, delta):", coef)
prim = min_snap_primitive(np.c_[[0, 0, 0], np.zeros((3, 3))], np.c_[[1, 0, 0], np.zeros((3, 3))], 1.0)
print(f"snap cost J = {prim.snap_cost:.1f}")
print("position at t = 0, 0.25, 0.5, 0.75, 1:", np.round(prim.states([0, .25, .5, .75, 1])[:, 0], 4))

# cost grows steeply with speed and shrinks with duration
for T in (1.0, 1.6, 3.0):
    p = min_snap_primitive(np.c_[[0, 0, 0], np.zeros((3, 3))], np.c_[[1, 0, 0], np.zeros((3, 3))], T)
    print(f"  1 m in {T:.1f} s: J = {p.snap_cost:10.2f}")

# the default action space from a hover at the origin
cfg = SystemConfig()
start = Viewpoint([0.0, 0.0, 1.0], 0.0)
actions = action_space(cfg)
print(f"{len(actions)} actions over T = {cfg.T} s")
for a in actions[:: max(1, len(actions) // 6)]:
    goal = propagate(start, a, cfg.T)
    p = primitive_between(start, goal, cfg.T)
    print(f"  v_xy {a.v_xy:4.2f} v_z {a.v_z:5.2f} omega {a.omega_z:6.3f} -> "
          f"({goal.position[0]:5.2f}, {goal.position[1]:5.2f}, {goal.position[2]:4.2f}) "
          f"J = {p.snap_cost:8.3f}, path {path_length(p):.3f} m")
