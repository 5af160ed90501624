"""stagelab: a desk-scale laboratory for staged training of two-layer linear networks.

Build a spectral task family (tasks), train exact two-layer linear dynamics on
it (network), chain pretrain/posttrain/finetune stages (pipeline), verify the
claimed behaviors against independent scalar oracles (checks), and compare
methods on Pareto frontiers (frontier).  The cli module exposes all of it as
the `stagelab` command.
"""

from .checks import (
    CheckReport,
    check_assumptions,
    check_forgetting_gap,
    check_frozen_directions,
    check_posttrain_routing,
    check_sequential_order,
    check_specialized_acquisition,
    forgetting_lower_bound,
    idealized_checkpoint,
    run_all_checks,
)
from .config import DEFAULTS, ExperimentConfig, load_config, loads_config
from .errors import (
    ConfigError,
    PreconditionError,
    StagelabError,
    TaskValidationError,
    TrainingDiverged,
)
from .frontier import (
    DominanceReport,
    FrontierPoint,
    ParetoFrontier,
    dominates,
    hypervolume,
    pareto_front,
    points_from_records,
)
from .network import (
    NetworkState,
    Snapshot,
    TrainConfig,
    Trajectory,
    aligned_spectrum,
    derived_diag_step,
    gradient_step,
    idealized_diag_step,
    init_from_spectrum,
    init_scaled_identity,
    population_gradient,
    population_loss,
    scalar_fixed_point,
    stochastic_step,
    train,
)
from .pipeline import (
    CheckpointMetrics,
    PipelineRun,
    StagePlan,
    compute_forgetting,
    compute_matched_plans,
    continue_from_pretrained,
    make_run_id,
    run_pipeline,
    run_sweep,
    stage_training_distribution,
    sweep_to_csv,
)
from .records import (
    dumps_record,
    format_float,
    pipeline_run_record,
    read_records,
    snapshot_records,
    stable_hash,
    write_records,
)
from .svgplot import render_frontier_svg
from .tasks import (
    AssumptionReport,
    FeaturePartition,
    SpectralBasis,
    StageDistribution,
    TaskFamily,
    TaskSpectra,
    build_task_family,
    cross_covariance_spectrum,
    make_reference_family,
    mix_distributions,
    validate_assumptions,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "CheckReport",
    "CheckpointMetrics",
    "ConfigError",
    "DEFAULTS",
    "DominanceReport",
    "ExperimentConfig",
    "FeaturePartition",
    "FrontierPoint",
    "NetworkState",
    "ParetoFrontier",
    "PipelineRun",
    "PreconditionError",
    "Snapshot",
    "SpectralBasis",
    "StageDistribution",
    "StagePlan",
    "StagelabError",
    "TaskFamily",
    "TaskSpectra",
    "TaskValidationError",
    "TrainConfig",
    "TrainingDiverged",
    "Trajectory",
    "aligned_spectrum",
    "build_task_family",
    "check_assumptions",
    "check_forgetting_gap",
    "check_frozen_directions",
    "check_posttrain_routing",
    "check_sequential_order",
    "check_specialized_acquisition",
    "compute_forgetting",
    "compute_matched_plans",
    "continue_from_pretrained",
    "cross_covariance_spectrum",
    "derived_diag_step",
    "dominates",
    "dumps_record",
    "forgetting_lower_bound",
    "format_float",
    "gradient_step",
    "hypervolume",
    "idealized_checkpoint",
    "idealized_diag_step",
    "init_from_spectrum",
    "init_scaled_identity",
    "load_config",
    "loads_config",
    "make_reference_family",
    "make_run_id",
    "mix_distributions",
    "pareto_front",
    "pipeline_run_record",
    "points_from_records",
    "population_gradient",
    "population_loss",
    "read_records",
    "render_frontier_svg",
    "run_all_checks",
    "run_pipeline",
    "run_sweep",
    "scalar_fixed_point",
    "snapshot_records",
    "stable_hash",
    "stage_training_distribution",
    "stochastic_step",
    "sweep_to_csv",
    "train",
    "validate_assumptions",
    "write_records",
]
