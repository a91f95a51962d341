"""Run configuration, loadable from JSON and overridable from the CLI."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from ..errors import ConfigError
from ..metrics import MetricsConfig
from ..rewards import RewardConfig
from . import prompts

PROTOCOLS = ("piter", "trrgr")


@dataclass(frozen=True)
class RunConfig:
    protocol: str = "piter"
    system_prompt: str | None = None  # None picks the protocol default
    piter_template: str = prompts.DEFAULT_PITER_TEMPLATE
    question_template: str = prompts.DEFAULT_TRRGR_QUESTION_TEMPLATE
    feedback_template: str = prompts.DEFAULT_FEEDBACK_TEMPLATE
    model_backend: str = ""
    tool_backend: str = ""
    tool_seed: int = 0
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    parallelism: int = 1
    output_dir: str = "runs/latest"

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        prompts.check_template(self.piter_template)
        prompts.check_template(self.question_template, (prompts.QUESTION,))
        prompts.check_template(self.feedback_template, (prompts.TOOL_RESULTS,))
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")

    @property
    def effective_system_prompt(self) -> str:
        if self.system_prompt is not None:
            return self.system_prompt
        if self.protocol == "piter":
            return prompts.DEFAULT_PITER_SYSTEM_PROMPT
        return prompts.DEFAULT_TRRGR_SYSTEM_PROMPT

    def to_json(self) -> dict[str, Any]:
        out = asdict(self)
        out["metrics"] = self.metrics.to_json()
        out["rewards"] = self.rewards.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
        obj = dict(obj)
        if "metrics" in obj:
            obj["metrics"] = MetricsConfig.from_json(obj["metrics"])
        if "rewards" in obj:
            obj["rewards"] = RewardConfig.from_json(obj["rewards"])
        return cls(**obj)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with Path(path).open(encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def updated(self, **changes: Any) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})
