"""
Scoring candidate views by expected information
================================================

After a few frames, the map is confident about the side it has seen and
knows nothing about the back. The expected mutual information of a view is
rendered like a colour channel, so views facing unseen surfaces score high.
"""

import numpy as np

from gaussmi import SystemConfig, evaluate_gauss_mi, make_toy_scene, run_active_loop
from gaussmi.sim import DEFAULT_INTRINSICS as K, resolution_matched

scene = make_toy_scene("crate")
cfg = resolution_matched(SystemConfig(), K)
gmap, log = run_active_loop(scene, cfg, "gauss_mi", max_steps=3, seed=0, track_psnr=False,
                            stop_on_termination=False)
print(f"map after {log.records[-1].n_frames} frames: {len(gmap)} Gaussians, "
      f"done fraction {log.records[-1].done_fraction:.3f}")

# score the held-out ring of views around the object
scores = []
for v in scene.test_views:
    res = evaluate_gauss_mi(gmap, v, K)
    scores.append(res.total_mi)
    print(f"  view at ({v.position[0]:5.2f}, {v.position[1]:5.2f}, {v.position[2]:4.2f}) "
          f"yaw {np.degrees(v.yaw):7.1f} deg: I = {res.total_mi:8.2f} nats, "
          f"{res.gaussians_touched} Gaussians visible")

best = int(np.argmax(scores))
print(f"most informative held-out view: {best} (I = {scores[best]:.2f})")

# the MI image shows where the information is
img = evaluate_gauss_mi(gmap, scene.test_views[best], K).mi_image
rows = img.sum(axis=1)
print("row sums of the MI image (top to bottom, every 6th row):", np.round(rows[::6], 2))
