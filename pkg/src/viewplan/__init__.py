"""Camera view planning for 3D reconstruction via ensemble-GP Bayesian optimization."""

from viewplan.geometry import (
    CameraPose,
    ViewPlan,
    SearchSpace,
    decode_plan,
    encode_plan,
    is_visible,
    parallax_angle,
)
from viewplan.metrics import chamfer_distance, depth_mae, simple_regret_curve, DepthGridSpec
from viewplan.scene import (
    Scene,
    SceneSpec,
    NoiseSpec,
    generate_scene,
    transform_scene,
    reconstruct,
    reward,
    geometric_coverage,
)
from viewplan.gp import KernelSpec, GpModel, fit_posterior, predict, log_marginal_likelihood
from viewplan.ensemble import Ensemble, update_weights, ensemble_posterior, sample_model
from viewplan.acquisition import expected_improvement, maximize_af, AcquisitionBudget
from viewplan.driver import BoConfig, Trace, TraceRecord, init_design, run_ensemble_bo, best_plan

__version__ = "0.1.0"
