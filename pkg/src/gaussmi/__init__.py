"""Active 3D reconstruction with Gaussian-splatting Shannon mutual information."""

from .config import SystemConfig, load_config, parse_config
from .scene import (CameraIntrinsics, Gaussian, GaussianMap, Observation, Viewpoint,
                    backproject_spawn, load_map, save_map)
from .renderer import RenderOutput, project_gaussian, rasterize
from .optimizer import optimize_step
from .belief import (direction_bucket, done_fraction, inverse_sensor_probability,
                     loss_image, mean_reliability, terminated, update_probabilities)
from .mi import (MIResult, SensorNoiseModel, evaluate_gauss_mi, info_gain_expected,
                 info_gain_full, luminance, measurement_prior)
from .planner import (Action, MotionPrimitive, action_space, min_snap_primitive,
                      primitive_cost, primitive_sample, propagate, safety_check, select_nbv)
from .metrics import ause, efficiency, psnr, sparsification, ssim
from .sim import GroundTruthScene, groundtruth_observe, make_toy_scene, run_active_loop

__version__ = "0.1.0"
