"""
Active reconstruction: information-driven versus random views
==============================================================

Both policies get the same frame budget on the same scene. The information
policy picks the safe primitive with the best trade-off between expected
information and snap cost; the random policy picks any safe primitive.
"""

import sys

from gaussmi import SystemConfig, efficiency, make_toy_scene, run_active_loop
from gaussmi.sim import DEFAULT_INTRINSICS as K, resolution_matched

kind = sys.argv[1] if len(sys.argv) > 1 else "drum"
frames = int(sys.argv[2]) if len(sys.argv) > 2 else 12
scene = make_toy_scene(kind)
cfg = resolution_matched(SystemConfig(), K)

for policy in ("gauss_mi", "random"):
    gmap, log = run_active_loop(scene, cfg, policy, max_steps=frames - 1, seed=0,
                                stop_on_termination=False)
    print(f"\n{policy}: {log.status}, {len(gmap)} Gaussians")
    print(" step  frames  path[m]  done   PSNR[dB]")
    for r in log.records[:: max(1, len(log.records) // 6)] + [log.records[-1]]:
        print(f" {r.step:4d}  {r.n_frames:6d}  {r.path_length:7.2f}  {r.done_fraction:.3f}  {r.psnr:7.2f}")
    last = log.records[-1]
    print(f"efficiency E = PSNR / log10(N_f) = {efficiency(last.psnr, last.n_frames):.2f}")
