"""Sequential detection of an emerging community in Erdos-Renyi graph streams."""

from .graphs import (
    GraphSnapshot,
    ScenarioSpec,
    StreamHandle,
    sample_snapshot,
    stream,
)
from .stats import EdgeCountWindow, LlrParams, soft_threshold_h
from .detectors import (
    AlarmResult,
    DetectorConfig,
    StepReport,
    make_detector,
    run_until_alarm,
)
from .theory import TheoryParams, arl_lower_bound, arl_upper_bound, threshold_for_arl

__all__ = [
    "GraphSnapshot",
    "ScenarioSpec",
    "StreamHandle",
    "sample_snapshot",
    "stream",
    "EdgeCountWindow",
    "LlrParams",
    "soft_threshold_h",
    "AlarmResult",
    "DetectorConfig",
    "StepReport",
    "make_detector",
    "run_until_alarm",
    "TheoryParams",
    "arl_lower_bound",
    "arl_upper_bound",
    "threshold_for_arl",
]

__version__ = "0.1.0"
