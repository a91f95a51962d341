"""Evaluation, reward and simulation harness for tool-refined visual grounding."""

from .geometry import BinaryMask, Box, area, clamp_to_image, iou, mask_to_box
from .grpo import RolloutGroup, Trajectory, assemble_group, group_advantages
from .metrics import MetricsConfig, MetricsReport, SampleOutcome, build_report
from .rewards import RewardBreakdown, RewardConfig
from .trace_parser import ParsedTrajectory, parse_piter_output, validate_trajectory

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "Box",
    "MetricsConfig",
    "MetricsReport",
    "ParsedTrajectory",
    "RewardBreakdown",
    "RewardConfig",
    "RolloutGroup",
    "SampleOutcome",
    "Trajectory",
    "area",
    "assemble_group",
    "build_report",
    "clamp_to_image",
    "group_advantages",
    "iou",
    "mask_to_box",
    "parse_piter_output",
    "validate_trajectory",
]
