"""Multi-user status-update scheduling: context-weighted error metric,
drift-plus-penalty index policies, water-filling tuning, and a
remote-control cart-pole benchmark."""

from .core import (
    Gaussian,
    PointMass,
    ScheduleDecision,
    SystemParams,
    TwoPoint,
    UserState,
    context_lapse,
    sample_increment,
    sample_weight,
    step_aoi,
    step_error,
    substream,
)
from .policies import PolicyKind, PolicyInput, select
from .simengine import (
    MetricsAccumulator,
    PAPER_THRESHOLDS,
    ThresholdRule,
    avg_context_lapse,
    run_trace,
    run_traces,
    violation_probability,
)
from .waterfill import (
    BarSpec,
    StationaryPolicy,
    bound_objective,
    closed_form_k1,
    stationary_for_params,
    waterfill,
)

__all__ = [
    "BarSpec",
    "Gaussian",
    "MetricsAccumulator",
    "PAPER_THRESHOLDS",
    "PointMass",
    "PolicyInput",
    "PolicyKind",
    "ScheduleDecision",
    "StationaryPolicy",
    "SystemParams",
    "ThresholdRule",
    "TwoPoint",
    "UserState",
    "avg_context_lapse",
    "bound_objective",
    "closed_form_k1",
    "context_lapse",
    "run_trace",
    "run_traces",
    "sample_increment",
    "sample_weight",
    "select",
    "stationary_for_params",
    "step_aoi",
    "step_error",
    "substream",
    "violation_probability",
    "waterfill",
]

__version__ = "0.1.0"
