"""TOA vehicle pose estimation toolkit.

Estimates planar vehicle poses (east, north, yaw) from time-of-arrival ranging
between several body-mounted antennas and surveyed anchors, fusing a sliding
window of epochs with odometry-style inter-epoch constraints.  Ships a
semidefinite-relaxation initializer, a Gauss-Newton refiner, a single-epoch
baseline, Cramer-Rao bound tools, scenario synthesis with line-of-sight
blockage, and a Monte Carlo benchmark harness.
"""

from .crlb import FisherInfo, SingularFIM, fim_mema, fim_sema
from .frames import (
    Attitude,
    Pose,
    RotationVectorization,
    antenna_position,
    kronecker_row,
    rotation_matrix,
    rotation_yaw_derivative,
    vectorize_rotation,
    wrap_angle,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    PointResult,
    RunResult,
    TrialRecord,
    bound_table,
    read_records,
    resolve_scenario,
    run_monte_carlo,
    run_point,
    run_trial,
    summarize,
    write_records,
)
from .measurement import (
    EpochMeasurements,
    InsufficientMeasurements,
    TdoaBundle,
    form_tdoa,
    inter_epoch_covariance,
    predict_inter_epoch,
    predict_tdoa,
    tdoa_covariance,
)
from .refine import (
    NotConverged,
    RankDeficient,
    RefineError,
    SingularGeometry,
    WindowEstimate,
    gauss_newton,
    linearize,
    oracle_grid_mle,
    sema_solve,
    window_cost,
)
from .scenario import (
    Box,
    Scenario,
    VisibilityMap,
    build_four_anchor_scene,
    build_port_scene,
    compute_visibility,
    load_bundled,
    load_scenario,
    los_visible,
    save_scenario,
    synthesize_epoch,
    synthesize_trial,
)
from .sdp_init import build_sdp_window, extract_poses, solve_window

__version__ = "0.1.0"

__all__ = [
    "Attitude",
    "Box",
    "ConfigError",
    "EpochMeasurements",
    "ExperimentConfig",
    "FisherInfo",
    "InsufficientMeasurements",
    "NotConverged",
    "PointResult",
    "Pose",
    "RankDeficient",
    "RefineError",
    "RotationVectorization",
    "RunResult",
    "Scenario",
    "SingularFIM",
    "SingularGeometry",
    "TdoaBundle",
    "TrialRecord",
    "VisibilityMap",
    "WindowEstimate",
    "antenna_position",
    "bound_table",
    "build_four_anchor_scene",
    "build_port_scene",
    "build_sdp_window",
    "compute_visibility",
    "extract_poses",
    "fim_mema",
    "fim_sema",
    "form_tdoa",
    "gauss_newton",
    "inter_epoch_covariance",
    "kronecker_row",
    "linearize",
    "load_bundled",
    "load_scenario",
    "los_visible",
    "oracle_grid_mle",
    "predict_inter_epoch",
    "predict_tdoa",
    "read_records",
    "resolve_scenario",
    "rotation_matrix",
    "rotation_yaw_derivative",
    "run_monte_carlo",
    "run_point",
    "run_trial",
    "save_scenario",
    "sema_solve",
    "solve_window",
    "summarize",
    "synthesize_epoch",
    "synthesize_trial",
    "tdoa_covariance",
    "vectorize_rotation",
    "window_cost",
    "wrap_angle",
    "write_records",
    "__version__",
]
