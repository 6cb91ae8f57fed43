"""Classical shadow estimation for adaptively prepared, non-i.i.d. states and channels."""
from .acquisition import MeasurementRecord, RngStreamSpec, load_record, run_acquisition, save_record
from .errors import ShadowsError
from .estimators import (
    EstimateResult,
    EstimationPlan,
    median_of_means,
    plain_mean,
    plan_for_protocol,
    plan_samples,
    shadow_norm_sq,
    single_shot_values,
    threshold,
    truncate,
    truncated_mean,
    v_H,
)
from .frames import (
    CliffordProtocol,
    FixedPovmProtocol,
    PauliProtocol,
    Povm,
    dual_frame,
    frame_superoperator,
    pauli6_povm,
    shadow_norm_exact,
    single_shot_value,
)
from .harness import CoverageReport, ExperimentConfig, cmd_compare, cmd_experiment, cmd_plan
from .pauli import PauliString, WeightedPauliSum, parse_observable
from .process import Channel, InputEnsemble, ProcessProtocol, estimate_process, process_povm, run_process_acquisition
from .sources import History, Trajectory, feedback_source, iid_source, linear_drift_source, trajectory_average

__version__ = "0.1.0"
