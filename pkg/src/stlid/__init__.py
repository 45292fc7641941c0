"""Spatiotemporal LID outlier detection for ground-displacement monitoring."""

from .data import (
    FailureRegion,
    GroundTruth,
    KinematicSample,
    MonitoredPoint,
    MonitoringDataset,
    load_dataset,
    load_ground_truth,
    sample_at,
    save_dataset,
    save_ground_truth,
    velocity_at,
)
from .detection import (
    DetectionConfig,
    DetectionEvent,
    DetectionState,
    StLidField,
    default_epsilon,
    sigmoid,
    st_lid_field,
    update_detection,
)
from .fusion import (
    FusionConfig,
    GammaParams,
    fuse_all,
    fused_slid,
    gaussian_weights,
    observation_params,
    prior_from_neighbors,
)
from .lid import (
    LidConfig,
    LidField,
    kinematic_distance,
    mle_lid,
    s_lid_all,
    t_lid,
    t_lid_field,
)
from .metrics import (
    BaselineConfig,
    EvaluationReport,
    benchmark,
    format_lead,
    lead_time,
    precision,
)
from .baselines import (
    BaselineResult,
    dbscan,
    dbscan_labels,
    edq_select,
    kmeans2,
    lof,
    lof_scores,
    raw_slid_baseline,
    write_baseline_scores_csv,
)
from .pipeline import RunResult, iter_run, run_detection
from .synthetic import (
    CreepScenarioSpec,
    generate_creep_scenario,
    noise_only_spec,
    shipped_scenario_spec,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig",
    "BaselineResult",
    "CreepScenarioSpec",
    "DetectionConfig",
    "DetectionEvent",
    "DetectionState",
    "EvaluationReport",
    "FailureRegion",
    "FusionConfig",
    "GammaParams",
    "GroundTruth",
    "KinematicSample",
    "LidConfig",
    "LidField",
    "MonitoredPoint",
    "MonitoringDataset",
    "RunResult",
    "StLidField",
    "benchmark",
    "dbscan",
    "dbscan_labels",
    "default_epsilon",
    "edq_select",
    "format_lead",
    "fuse_all",
    "fused_slid",
    "gaussian_weights",
    "generate_creep_scenario",
    "iter_run",
    "kinematic_distance",
    "kmeans2",
    "lead_time",
    "load_dataset",
    "load_ground_truth",
    "lof",
    "lof_scores",
    "mle_lid",
    "noise_only_spec",
    "observation_params",
    "precision",
    "prior_from_neighbors",
    "raw_slid_baseline",
    "run_detection",
    "s_lid_all",
    "sample_at",
    "save_dataset",
    "save_ground_truth",
    "shipped_scenario_spec",
    "sigmoid",
    "st_lid_field",
    "t_lid",
    "t_lid_field",
    "update_detection",
    "velocity_at",
    "write_baseline_scores_csv",
]
