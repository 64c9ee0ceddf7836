"""Multi-target tracking on random finite sets of trajectories.

Poisson multi-Bernoulli mixture (PMBM) trackers whose single-object states
are whole trajectories (birth time, end time, state sequence), with an
information-form linear-Gaussian backend, ranked-assignment data
association, and matched evaluation metrics.
"""

__version__ = "0.1.0"

from .association import (
    AssociationConfig,
    PruneConfig,
    gate,
    gate_distances,
    k_best_global,
    murty,
    prune_density,
)
from .estimation import (
    TrajectoryEstimate,
    extract_current_states,
    extract_trajectories,
    marginalize_density,
)
from .gaussinfo import (
    FactorizationError,
    InfoGaussian,
    batch_predictive_loglik,
    info_predict,
    info_update,
    marginal_last_step,
    predictive_likelihood,
    recover_mean,
)
from .metrics import (
    GospaParams,
    GospaResult,
    TrajMetricParams,
    TrajMetricResult,
    gospa,
    traj_metric,
)
from .mixtures import (
    BernoulliComponent,
    GaussianComponent,
    GlobalHypothesis,
    MixtureComponent,
    PMBMDensity,
    TargetBernoulli,
    Track,
    Trajectory,
    TrajectoryMixture,
    empty_density,
    live_mass,
    marginalize_to_target,
    normalize_hypotheses,
    prune_mixture,
)
from .models import (
    BirthModel,
    ClutterModel,
    MeasurementModel,
    MotionModel,
    constant_velocity_model,
    position_measurement_model,
)
from .prediction import predict_all, predict_current
from .simulator import (
    SimulationResult,
    coalescence_config,
    grid_config,
    load_frames,
    models_from_config,
    save_frames,
    simulate,
    validate_config,
)
from .targetfilter import (
    empty_target_density,
    extract_target_states,
    predict_filter,
    prune_target_density,
    update_filter,
)
from .tracker import (
    PMBMTracker,
    RunResult,
    TrackerConfig,
    run_tracker,
    tracker_config_from_dict,
)
from .update import update

__all__ = [
    "AssociationConfig",
    "PruneConfig",
    "gate",
    "gate_distances",
    "k_best_global",
    "murty",
    "prune_density",
    "TrajectoryEstimate",
    "extract_current_states",
    "extract_trajectories",
    "marginalize_density",
    "FactorizationError",
    "InfoGaussian",
    "batch_predictive_loglik",
    "info_predict",
    "info_update",
    "marginal_last_step",
    "predictive_likelihood",
    "recover_mean",
    "GospaParams",
    "GospaResult",
    "TrajMetricParams",
    "TrajMetricResult",
    "gospa",
    "traj_metric",
    "BernoulliComponent",
    "GaussianComponent",
    "GlobalHypothesis",
    "MixtureComponent",
    "PMBMDensity",
    "TargetBernoulli",
    "Track",
    "Trajectory",
    "TrajectoryMixture",
    "empty_density",
    "live_mass",
    "marginalize_to_target",
    "normalize_hypotheses",
    "prune_mixture",
    "BirthModel",
    "ClutterModel",
    "MeasurementModel",
    "MotionModel",
    "constant_velocity_model",
    "position_measurement_model",
    "predict_all",
    "predict_current",
    "SimulationResult",
    "coalescence_config",
    "grid_config",
    "load_frames",
    "models_from_config",
    "save_frames",
    "simulate",
    "validate_config",
    "empty_target_density",
    "extract_target_states",
    "predict_filter",
    "prune_target_density",
    "update_filter",
    "PMBMTracker",
    "RunResult",
    "TrackerConfig",
    "run_tracker",
    "tracker_config_from_dict",
    "update",
]
