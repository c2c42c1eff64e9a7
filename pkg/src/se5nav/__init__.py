"""Geometric inertial-navigation observer on SE_5(3).

Position, velocity, and attitude estimation from an IMU plus generic
body-frame / inertial-frame outputs, with Riccati-tuned gains, a truth and
sensor simulator, and observability analysis tooling.
"""

from .frontend import (
    UnifiedLayout,
    UnifiedOutput,
    build_unified,
    innovation_inputs,
    output_matrix,
    reference_vector,
)
from .lie import SEn, hat, kron, project_rotation, psi, rotation_angle, so3_exp, vec, vec_inv, vex
from .observability import GramianReport, gps_pe_condition, gramian, transition_matrix
from .observer import (
    DivergenceError,
    ErrorReport,
    ObserverConfig,
    ObserverState,
    build_a,
    build_abar,
    build_d,
    build_u,
    delta_r,
    delta_r_decomposition,
    error_report,
    gain,
    geometric_error,
    kalman_reference_run,
    observer_step,
    riccati_step,
)
from .scenario import (
    ConfigError,
    RunSummary,
    ScenarioConfig,
    bundled_config_path,
    check_gps_pe,
    check_observability,
    estimate_from_errors,
    parse_scenario,
    run_observer,
    run_observer_coupled,
    run_scenario,
    sweep_agas,
)
from .sensors import ChannelKind, ChannelSpec, ImuNoiseSpec, MeasurementSample, corrupt_imu, measure
from .trajectory import (
    TrajectorySpec,
    TruthRun,
    TruthState,
    eval_omega,
    eval_trajectory,
    propagate_attitude,
    simulate_truth,
    synthesize_imu,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
