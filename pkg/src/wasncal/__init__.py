"""Calibration, grouping, and bandwidth control for mobile acoustic networks."""

from .alignment import (
    align_sources,
    cosine_similarity,
    estimate_distance,
    single_source_segments,
)
from .control import (
    AllocationPlan,
    FeatureMode,
    StreamDescriptor,
    allocate_bandwidth,
    estimate_delay,
    select_mode,
)
from .conversation import (
    ConversationGraph,
    GroupingMetrics,
    NodePoseSnapshot,
    build_graph,
    evaluate,
    interest,
)
from .geometry import (
    GeometryEstimate,
    PolarObservation,
    Pose2,
    calibrate,
    gauge_align,
    match_datasets,
)
from .mobile import (
    MobileObservation,
    MotionDelta,
    SlidingCalibrator,
    WindowConfig,
    motion_compensate,
    sliding_calibrate,
    time_decay_weights,
)
from .simulator import (
    NoiseModel,
    Scenario,
    ScenarioConfig,
    generate_scenario,
    match_tracks,
    observe,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationPlan",
    "ConversationGraph",
    "FeatureMode",
    "GeometryEstimate",
    "GroupingMetrics",
    "MobileObservation",
    "MotionDelta",
    "NodePoseSnapshot",
    "NoiseModel",
    "PolarObservation",
    "Pose2",
    "Scenario",
    "ScenarioConfig",
    "SlidingCalibrator",
    "StreamDescriptor",
    "WindowConfig",
    "align_sources",
    "allocate_bandwidth",
    "build_graph",
    "calibrate",
    "cosine_similarity",
    "estimate_delay",
    "estimate_distance",
    "evaluate",
    "gauge_align",
    "generate_scenario",
    "interest",
    "match_datasets",
    "match_tracks",
    "motion_compensate",
    "observe",
    "select_mode",
    "single_source_segments",
    "sliding_calibrate",
    "time_decay_weights",
]
