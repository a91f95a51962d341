"""Offline rewards and advantages for rollout groups.

Input JSONL, one group per line::

    {"sample_id": "s1", "trajectories": [
        {"turns": ["<think>...</think><tool_call>...</tool_call>", "<rethink>...</rethink><answer>...</answer>"],
         "tool_bbox": [x1, y1, x2, y2] | null},
        ...]}

Output JSONL mirrors it with per-trajectory reward breakdowns and the group
advantages.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

from ..errors import GroupSizeMismatch, InvalidBoxGeometry, ParseError, UnknownSample
from ..geometry import Box, clamp_to_image, iou
from ..grpo import DEFAULT_EPS, RolloutGroup, Trajectory, assemble_group
from ..rewards import RewardConfig, score
from ..trace_parser import validate_trajectory
from .dataset import Sample


def score_trajectory(
    sample: Sample, turns: Sequence[str], tool_bbox: Box | None, config: RewardConfig
) -> Trajectory:
    if len(turns) != 2:
        raise ValueError(f"expected 2 turns, got {len(turns)}")
    parsed = validate_trajectory(turns[0], turns[1])
    iou_t = 0.0 if tool_bbox is None else iou(tool_bbox, sample.gt_bbox)
    pred = None
    if parsed.answer_box is not None:
        pred = clamp_to_image(parsed.answer_box, sample.width, sample.height)
    iou_f = 0.0 if pred is None else iou(pred, sample.gt_bbox)
    return Trajectory(
        sample_id=sample.sample_id,
        think=parsed.think,
        action=parsed.tool_action,
        tool_feedback=tool_bbox,
        rethink=parsed.rethink,
        breakdown=score(parsed, iou_t, iou_f, config),
        answer_box=pred,
    )


def compute_rollout_rewards(
    trajectory_file: str | Path,
    gt_lookup: Mapping[str, Sample],
    config: RewardConfig = RewardConfig(),
    out_path: str | Path | None = None,
    group_size: int | None = None,
    eps: float = DEFAULT_EPS,
) -> list[RolloutGroup]:
    """Score every group; all groups must have ``group_size`` trajectories
    (or, when None, the size of the first group)."""
    path = Path(trajectory_file)
    groups: list[RolloutGroup] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                sid = rec["sample_id"]
                items = rec["trajectories"]
                if not isinstance(items, list):
                    raise TypeError("trajectories must be a list")
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(str(path), lineno, f"bad group record: {exc}") from None
            if sid not in gt_lookup:
                raise UnknownSample(sid)
            if group_size is None:
                group_size = len(items)
            if len(items) != group_size:
                raise GroupSizeMismatch(
                    f"{path}:{lineno}: group {sid!r} has {len(items)} trajectories, expected {group_size}"
                )
            sample = gt_lookup[sid]
            trajs = []
            for item in items:
                try:
                    raw = item.get("tool_bbox")
                    tool_box = None if raw is None else Box.from_raw(raw)
                    trajs.append(score_trajectory(sample, item["turns"], tool_box, config))
                except (KeyError, TypeError, ValueError, AttributeError, InvalidBoxGeometry) as exc:
                    raise ParseError(str(path), lineno, f"bad trajectory: {exc}") from None
            groups.append(assemble_group(sid, trajs, eps))

    if out_path is not None:
        with Path(out_path).open("w", encoding="utf-8") as fh:
            for g in groups:
                fh.write(json.dumps(g.to_json(), ensure_ascii=False) + "\n")
    return groups
