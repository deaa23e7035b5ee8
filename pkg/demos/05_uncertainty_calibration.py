"""
How well does the MI image predict rendering error?
====================================================

Sparsification removes the pixels the map is least sure about and tracks the
remaining mean error. A useful uncertainty follows the oracle curve (pixels
removed by true error); AUSE is the area between the two.
"""

import numpy as np

from gaussmi import SystemConfig, ause, evaluate_gauss_mi, make_toy_scene, rasterize, run_active_loop
from gaussmi import sparsification
from gaussmi.sim import DEFAULT_INTRINSICS as K, groundtruth_images, resolution_matched

scene = make_toy_scene("pair")
cfg = resolution_matched(SystemConfig(), K)
gmap, _ = run_active_loop(scene, cfg, "gauss_mi", max_steps=4, seed=1, track_psnr=False,
                          stop_on_termination=False)

rng = np.random.default_rng(0)
a_mi, a_rand = [], []
for i, (v, gt) in enumerate(zip(scene.test_views, groundtruth_images(scene, K))):
    err = np.abs(rasterize(gmap, v, K, record=False).color - gt).mean(axis=2)
    curve = sparsification(err, evaluate_gauss_mi(gmap, v, K).mi_image)
    a_mi.append(ause(curve))
    a_rand.append(ause(sparsification(err, rng.uniform(size=err.shape))))
    if i == 0:
        print("fraction removed, MAE by MI, MAE by oracle (view 0):")
        for f, m, o in zip(curve.fractions[::20], curve.mae[::20], curve.oracle_mae[::20]):
            print(f"  {f:4.2f}  {m:.4f}  {o:.4f}")

print(f"mean AUSE over {len(a_mi)} views: MI image {np.mean(a_mi):.3f}, "
      f"random ranking {np.mean(a_rand):.3f}")
