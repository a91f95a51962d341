"""Rule-based rewards for think/rethink trajectories.

Two signals are scored per trajectory:

* format reward: 1 when every tag is well formed, else 0;
* refinement reward, split into a tool-confirmation part (0.5 when both the
  tool box and the final box reach the IoU threshold) and a tool-refinement
  part (1 when the final box reaches the threshold although the tool box
  did not).

The combined scalar fed to GRPO is a harness convention: the sum of the
components, zeroed when the format check fails and ``gate_on_format`` is on.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Any

from .errors import ConfigError
from .trace_parser import FormatVerdict, ParsedTrajectory

CONFIRM_REWARD = 0.5
REFINE_REWARD = 1.0


@dataclass(frozen=True)
class RewardConfig:
    threshold: float = 0.5
    gate_on_format: bool = True
    include_iou_baseline: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict[str, Any] | str) -> "RewardConfig":
        if isinstance(obj, str):
            obj = json.loads(obj)
        unknown = set(obj) - {"threshold", "gate_on_format", "include_iou_baseline"}
        if unknown:
            raise ConfigError(f"unknown reward config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class RewardBreakdown:
    format: float
    refine_confirm: float
    refine_correct: float
    iou_baseline: float | None
    total: float

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "RewardBreakdown":
        return cls(**obj)


def format_reward(verdict: FormatVerdict | ParsedTrajectory | bool) -> float:
    if isinstance(verdict, ParsedTrajectory):
        valid = verdict.format_valid
    elif isinstance(verdict, FormatVerdict):
        valid = verdict.valid
    else:
        valid = bool(verdict)
    return 1.0 if valid else 0.0


def refinement_reward(iou_t: float, iou_f: float, threshold: float = 0.5) -> tuple[float, float]:
    """Return ``(confirm, correct)``; at most one of them is non-zero."""
    if iou_f < threshold:
        return 0.0, 0.0
    if iou_t >= threshold:
        return CONFIRM_REWARD, 0.0
    return 0.0, REFINE_REWARD


def iou_baseline_reward(iou_f: float) -> float:
    """Dense ablation reward: the final IoU itself."""
    return float(iou_f)


def total_reward(
    fmt: float,
    refine_confirm: float,
    refine_correct: float,
    iou_baseline: float | None = None,
    config: RewardConfig = RewardConfig(),
) -> float:
    if config.gate_on_format and fmt == 0:
        return 0.0
    total = fmt + refine_confirm + refine_correct
    if config.include_iou_baseline and iou_baseline is not None:
        total += iou_baseline
    return total


def score(
    verdict: FormatVerdict | ParsedTrajectory | bool,
    iou_t: float,
    iou_f: float,
    config: RewardConfig = RewardConfig(),
) -> RewardBreakdown:
    """Full breakdown for one trajectory."""
    fmt = format_reward(verdict)
    confirm, correct = refinement_reward(iou_t, iou_f, config.threshold)
    baseline = iou_baseline_reward(iou_f) if config.include_iou_baseline else None
    return RewardBreakdown(
        format=fmt,
        refine_confirm=confirm,
        refine_correct=correct,
        iou_baseline=baseline,
        total=total_reward(fmt, confirm, correct, baseline, config),
    )
