"""Rollout groups and group-relative advantages.

Advantages follow the usual GRPO normalisation,
``(r_i - mean(r)) / (std(r) + eps)`` with the population standard deviation.
Groups whose rewards are all equal get exact zeros instead of eps-scaled
noise. No policy update happens here; the output is meant for an external
trainer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import EmptyGroup, MixedSamples
from .geometry import Box
from .rewards import RewardBreakdown

DEFAULT_EPS = 1e-6


def group_advantages(rewards: Sequence[float], eps: float = DEFAULT_EPS) -> list[float]:
    if len(rewards) < 2:
        raise EmptyGroup(f"need at least 2 rewards per group, got {len(rewards)}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    r = np.asarray(rewards, dtype=np.float64)
    if np.all(r == r[0]):
        return [0.0] * len(r)
    centered = r - r.mean()
    std = np.sqrt(np.mean(centered * centered))
    return (centered / (std + eps)).tolist()


@dataclass(frozen=True)
class Trajectory:
    """One rollout ``{think, action, feedback, rethink}`` plus its reward."""

    sample_id: str
    think: str | None
    action: str | None
    tool_feedback: Box | None
    rethink: str | None
    breakdown: RewardBreakdown
    answer_box: Box | None = None

    @property
    def reward(self) -> float:
        return self.breakdown.total

    def to_json(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "think": self.think,
            "action": self.action,
            "tool_feedback": None if self.tool_feedback is None else self.tool_feedback.to_list(),
            "rethink": self.rethink,
            "answer_box": None if self.answer_box is None else self.answer_box.to_list(),
            "reward": self.reward,
            "breakdown": self.breakdown.to_json(),
        }


@dataclass(frozen=True)
class RolloutGroup:
    sample_id: str
    trajectories: tuple[Trajectory, ...]
    advantages: tuple[float, ...] | None = field(default=None)

    def to_json(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "trajectories": [t.to_json() for t in self.trajectories],
            "advantages": None if self.advantages is None else list(self.advantages),
        }


def assemble_group(
    sample_id: str, trajectories: Sequence[Trajectory], eps: float = DEFAULT_EPS
) -> RolloutGroup:
    if len(trajectories) < 2:
        raise EmptyGroup(f"sample {sample_id!r}: need at least 2 trajectories, got {len(trajectories)}")
    stray = sorted({t.sample_id for t in trajectories if t.sample_id != sample_id})
    if stray:
        raise MixedSamples(f"group for {sample_id!r} contains trajectories of {stray}")
    adv = group_advantages([t.reward for t in trajectories], eps)
    return RolloutGroup(sample_id, tuple(trajectories), tuple(adv))
