"""Single-stage (PiTER) and two-stage (think/rethink) evaluation drivers."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from ..errors import BackendUnavailable, ConfigError, MalformedToolCall, NoParsableBox, ToolUnavailable
from ..geometry import Box, clamp_to_image, iou
from ..metrics import MetricsReport, SampleOutcome, build_report, report_to_json_text
from ..rewards import RewardBreakdown, score
from ..toolsim import ToolPrediction, load_cache, preset
from ..trace_parser import Defect, parse_piter_output, parse_tool_action, validate_trajectory
from . import prompts
from .backends import CachedTool, HttpModel, ModelClient, ScriptedModel, SimulatedTool, ToolClient
from .config import RunConfig
from .dataset import Sample

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.jsonl"
REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"

# result flags
TOOL_FALLBACK = "tool_fallback"
MALFORMED_TOOL_CALL = "malformed_tool_call"
TOOL_UNAVAILABLE = "tool_unavailable"
BACKEND_UNAVAILABLE = "backend_unavailable"


def _box_json(b: Box | None) -> list | None:
    return None if b is None else b.to_list()


@dataclass(frozen=True)
class SampleResult:
    sample_id: str
    iou_t: float
    iou_f: float
    tool_bbox: Box | None
    pred_bbox: Box | None
    format_valid: bool
    rewards: RewardBreakdown
    raw_turns: list[str]
    parse_error: str | None = None
    defects: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    transcript: list[dict[str, Any]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.pred_bbox is None and (self.iou_f != 0.0 or self.parse_error is None):
            raise ValueError(f"{self.sample_id}: a missing prediction needs iou_f=0 and a parse_error")

    @property
    def outcome(self) -> SampleOutcome:
        return SampleOutcome(self.sample_id, self.iou_t, self.iou_f)

    def to_json(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "iou_t": self.iou_t,
            "iou_f": self.iou_f,
            "tool_bbox": _box_json(self.tool_bbox),
            "pred_bbox": _box_json(self.pred_bbox),
            "format_valid": self.format_valid,
            "defects": list(self.defects),
            "parse_error": self.parse_error,
            "flags": list(self.flags),
            "rewards": self.rewards.to_json(),
            "raw_turns": list(self.raw_turns),
            "transcript": self.transcript,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "SampleResult":
        return cls(
            sample_id=obj["sample_id"],
            iou_t=obj["iou_t"],
            iou_f=obj["iou_f"],
            tool_bbox=None if obj["tool_bbox"] is None else Box(*obj["tool_bbox"]),
            pred_bbox=None if obj["pred_bbox"] is None else Box(*obj["pred_bbox"]),
            format_valid=obj["format_valid"],
            rewards=RewardBreakdown.from_json(obj["rewards"]),
            raw_turns=list(obj["raw_turns"]),
            parse_error=obj.get("parse_error"),
            defects=list(obj.get("defects", [])),
            flags=list(obj.get("flags", [])),
            transcript=list(obj.get("transcript", [])),
        )


def _tool_iou(box: Box | None, gt: Box) -> float:
    # a null tool box localises nothing
    return 0.0 if box is None else iou(box, gt)


def _failed(sample: Sample, config: RunConfig, tool_box: Box | None, turns: list[str],
            transcript: list[dict[str, Any]], flags: list[str], exc: Exception) -> SampleResult:
    logger.warning("sample %s failed: %s", sample.sample_id, exc)
    iou_t = _tool_iou(tool_box, sample.gt_bbox)
    return SampleResult(
        sample_id=sample.sample_id,
        iou_t=iou_t,
        iou_f=0.0,
        tool_bbox=tool_box,
        pred_bbox=None,
        format_valid=False,
        rewards=score(False, iou_t, 0.0, config.rewards),
        raw_turns=turns,
        parse_error="BackendUnavailable",
        flags=flags + [BACKEND_UNAVAILABLE],
        transcript=transcript,
    )


def run_piter(
    sample: Sample, tool_pred: ToolPrediction | None, model: ModelClient, config: RunConfig
) -> SampleResult:
    """One request with the tool box injected into the prompt.

    The format component of the reward is 1 when a box could be parsed.
    """
    tool_box = None if tool_pred is None else tool_pred.bbox
    flags = [] if tool_pred is not None else [TOOL_UNAVAILABLE]
    prompt = prompts.render_piter_prompt(config.piter_template, sample.expression, tool_box)
    messages = [
        {"role": "system", "content": config.effective_system_prompt},
        {"role": "user", "content": prompt, "image": sample.image},
    ]
    try:
        response = model.complete(messages, sample_id=sample.sample_id, turn=1)
    except BackendUnavailable as exc:
        return _failed(sample, config, tool_box, [], messages, flags, exc)
    transcript = messages + [{"role": "assistant", "content": response}]

    parse_error = None
    try:
        pred = clamp_to_image(parse_piter_output(response), sample.width, sample.height)
    except NoParsableBox:
        pred, parse_error = None, "NoParsableBox"
    iou_t = _tool_iou(tool_box, sample.gt_bbox)
    iou_f = 0.0 if pred is None else iou(pred, sample.gt_bbox)
    return SampleResult(
        sample_id=sample.sample_id,
        iou_t=iou_t,
        iou_f=iou_f,
        tool_bbox=tool_box,
        pred_bbox=pred,
        format_valid=pred is not None,
        rewards=score(pred is not None, iou_t, iou_f, config.rewards),
        raw_turns=[response],
        parse_error=parse_error,
        flags=flags,
        transcript=transcript,
    )


_ANSWER_DEFECTS = (
    Defect.MISSING_ANSWER,
    Defect.DUPLICATE_TAG,
    Defect.MALFORMED_ANSWER_JSON,
    Defect.STRAY_ANSWER_CONTENT,
    Defect.INVALID_BOX_GEOMETRY,
)


def run_trrgr(sample: Sample, tool: ToolClient, model: ModelClient, config: RunConfig) -> SampleResult:
    """Think, query the tool, then rethink with the tool box as a user message."""
    sid = sample.sample_id
    flags: list[str] = []
    messages: list[dict[str, Any]] = [
        {"role": "system", "content": config.effective_system_prompt},
        {
            "role": "user",
            "content": prompts.render_question(config.question_template, sample.expression),
            "image": sample.image,
        },
    ]
    try:
        turn1 = model.complete(list(messages), sample_id=sid, turn=1)
    except BackendUnavailable as exc:
        return _failed(sample, config, None, [], messages, flags, exc)

    try:
        phrase = parse_tool_action(turn1)
    except MalformedToolCall:
        phrase = None
        flags.append(MALFORMED_TOOL_CALL)
    if phrase is None:
        phrase = sample.expression
        flags.append(TOOL_FALLBACK)
    try:
        tool_box = tool.ground(sample, phrase).bbox
    except ToolUnavailable as exc:
        logger.warning("tool unavailable for %s: %s", sid, exc)
        tool_box = None
        flags.append(TOOL_UNAVAILABLE)

    messages.append({"role": "assistant", "content": turn1})
    messages.append({"role": "user", "content": prompts.render_feedback(config.feedback_template, tool_box)})
    try:
        turn2 = model.complete(list(messages), sample_id=sid, turn=2)
    except BackendUnavailable as exc:
        return _failed(sample, config, tool_box, [turn1], messages, flags, exc)
    messages.append({"role": "assistant", "content": turn2})

    parsed = validate_trajectory(turn1, turn2)
    pred = None
    parse_error = None
    if parsed.answer_box is not None:
        pred = clamp_to_image(parsed.answer_box, sample.width, sample.height)
    else:
        parse_error = next((d.value for d in parsed.defects if d in _ANSWER_DEFECTS), parsed.defects[0].value)
    iou_t = _tool_iou(tool_box, sample.gt_bbox)
    iou_f = 0.0 if pred is None else iou(pred, sample.gt_bbox)
    return SampleResult(
        sample_id=sid,
        iou_t=iou_t,
        iou_f=iou_f,
        tool_bbox=tool_box,
        pred_bbox=pred,
        format_valid=parsed.format_valid,
        rewards=score(parsed.verdict, iou_t, iou_f, config.rewards),
        raw_turns=[turn1, turn2],
        parse_error=parse_error,
        defects=[d.value for d in parsed.defects],
        flags=flags,
        transcript=messages,
    )


def run_sample(sample: Sample, tool: ToolClient, model: ModelClient, config: RunConfig) -> SampleResult:
    if config.protocol == "trrgr":
        return run_trrgr(sample, tool, model, config)
    try:
        pred = tool.ground(sample, sample.expression)
    except ToolUnavailable as exc:
        logger.warning("tool unavailable for %s: %s", sample.sample_id, exc)
        pred = None
    return run_piter(sample, pred, model, config)


def write_results(results: Iterable[SampleResult], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def load_results(path: str | Path) -> list[SampleResult]:
    with Path(path).open(encoding="utf-8") as fh:
        return [SampleResult.from_json(json.loads(line)) for line in fh if line.strip()]


def evaluate(
    samples: Sequence[Sample],
    config: RunConfig,
    model: ModelClient,
    tool: ToolClient,
    output_dir: str | Path | None = None,
) -> MetricsReport:
    """Run every sample, persist results and the report, return the report.

    Results are written in dataset order whatever the completion order, and
    the report is computed from the persisted records.
    """
    out = Path(output_dir if output_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        results = list(pool.map(lambda s: run_sample(s, tool, model, config), samples))

    results_path = out / RESULTS_FILE
    write_results(results, results_path)
    report = build_report((r.outcome for r in load_results(results_path)), config.metrics)
    (out / REPORT_JSON).write_text(report_to_json_text(report), encoding="utf-8")
    (out / REPORT_CSV).write_text(report.to_csv(), encoding="utf-8")
    return report


def make_model(descriptor: str, **kwargs: Any) -> ModelClient:
    """``http:URL`` or ``scripted:PATH``."""
    kind, _, arg = descriptor.partition(":")
    if kind == "scripted" and arg:
        return ScriptedModel.from_jsonl(arg)
    if kind == "http" and arg:
        return HttpModel(arg, **kwargs)
    raise ConfigError(f"model backend must be http:URL or scripted:PATH, got {descriptor!r}")


def make_tool(descriptor: str, seed: int = 0) -> ToolClient:
    """``cache:PATH`` or ``sim:PRESET``."""
    kind, _, arg = descriptor.partition(":")
    if kind == "cache" and arg:
        return CachedTool(load_cache(arg))
    if kind == "sim" and arg:
        return SimulatedTool(preset(arg, seed))
    raise ConfigError(f"tool backend must be cache:PATH or sim:PRESET, got {descriptor!r}")
