"""Parsing and validation of think/rethink trajectories and single-stage answers.

Tag grammar (ASCII, case-sensitive)::

    turn 1:  <think>...</think> <tool_call>{"name": "ground", "arguments": {"phrase": "..."}}</tool_call>
    turn 2:  <rethink>...</rethink> <answer>{"bbox_2d": [x1, y1, x2, y2]}</answer>

Whitespace around tags is ignored. Inside ``<answer>`` only the JSON object
(plus whitespace) is allowed.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any

from .errors import (
    InvalidBoxGeometry,
    MalformedAnswerJson,
    MalformedToolCall,
    MultipleOccurrences,
    NoParsableBox,
    StrayAnswerContent,
)
from .geometry import Box

TAGS = ("think", "rethink", "answer", "tool_call")
TOOL_NAME = "ground"


class Defect(str, enum.Enum):
    MISSING_THINK = "MissingThink"
    MISSING_RETHINK = "MissingRethink"
    MISSING_ANSWER = "MissingAnswer"
    DUPLICATE_TAG = "DuplicateTag"
    TAG_ORDER_VIOLATION = "TagOrderViolation"
    MALFORMED_ANSWER_JSON = "MalformedAnswerJson"
    INVALID_BOX_GEOMETRY = "InvalidBoxGeometry"
    STRAY_ANSWER_CONTENT = "StrayAnswerContent"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class FormatVerdict:
    valid: bool
    defects: tuple[Defect, ...] = ()

    def __post_init__(self) -> None:
        if self.valid != (not self.defects):
            raise ValueError("verdict must be valid iff it has no defects")


@dataclass(frozen=True)
class ParsedTrajectory:
    think: str | None
    tool_action: str | None
    rethink: str | None
    answer_box: Box | None
    format_valid: bool
    defects: tuple[Defect, ...] = field(default_factory=tuple)

    @property
    def verdict(self) -> FormatVerdict:
        return FormatVerdict(self.format_valid, self.defects)


@dataclass(frozen=True)
class _Span:
    start: int  # index of the opening tag
    end: int  # index just past the closing tag
    inner: str


def _locate(text: str, tag: str) -> _Span | None:
    """Find the single well-formed occurrence of ``tag``.

    Raises MultipleOccurrences when either the opening or the closing tag
    appears more than once.
    """
    if tag not in TAGS:
        raise ValueError(f"unknown tag {tag!r}")
    open_tag, close_tag = f"<{tag}>", f"</{tag}>"
    n_open = text.count(open_tag)
    n_close = text.count(close_tag)
    if n_open > 1 or n_close > 1:
        raise MultipleOccurrences(tag, max(n_open, n_close))
    if n_open == 0:
        return None
    start = text.index(open_tag)
    close = text.find(close_tag, start + len(open_tag))
    if close < 0:
        return None
    return _Span(start, close + len(close_tag), text[start + len(open_tag) : close])


def extract_tag(text: str, tag: str) -> str | None:
    """Inner text of the unique ``<tag>...</tag>`` block, or None if absent/unclosed."""
    span = _locate(text, tag)
    return None if span is None else span.inner


def _box_from_payload(obj: Any) -> Box:
    if not isinstance(obj, dict) or "bbox_2d" not in obj:
        raise MalformedAnswerJson('expected a JSON object with key "bbox_2d"')
    coords = obj["bbox_2d"]
    if not isinstance(coords, list) or len(coords) != 4:
        raise MalformedAnswerJson(f'"bbox_2d" must hold exactly 4 numbers, got {coords!r}')
    for v in coords:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise MalformedAnswerJson(f"non-numeric coordinate {v!r}")
    return Box.from_raw(coords)


def parse_answer(text: str) -> Box:
    """Parse the inner content of an ``<answer>`` tag.

    Raises MalformedAnswerJson (StrayAnswerContent when a valid object is
    wrapped in extra text) or InvalidBoxGeometry.
    """
    body = text.strip()
    try:
        obj = json.loads(body)
    except (ValueError, RecursionError):
        pass
    else:
        return _box_from_payload(obj)

    # Valid object buried in prose/code fences: still a format defect.
    found = _first_bbox_object(body)
    if found is not None:
        raise StrayAnswerContent("answer contains text around the JSON object")
    raise MalformedAnswerJson(f"answer is not valid JSON: {body[:80]!r}")


def parse_tool_action(text: str) -> str | None:
    """Phrase argument of the ``<tool_call>`` block in a first-turn output."""
    try:
        span = _locate(text, "tool_call")
    except MultipleOccurrences as exc:
        raise MalformedToolCall(str(exc)) from None
    if span is None:
        if "<tool_call>" in text:
            raise MalformedToolCall("unterminated <tool_call>")
        return None
    try:
        obj = json.loads(span.inner)
    except (ValueError, RecursionError) as exc:
        raise MalformedToolCall(f"tool_call is not valid JSON: {exc}") from None
    if not isinstance(obj, dict) or obj.get("name") != TOOL_NAME:
        raise MalformedToolCall(f'tool_call must name the "{TOOL_NAME}" tool')
    args = obj.get("arguments")
    phrase = args.get("phrase") if isinstance(args, dict) else None
    if not isinstance(phrase, str) or not phrase.strip():
        raise MalformedToolCall("tool_call is missing a non-empty phrase")
    return phrase


def validate_trajectory(turn1: str, turn2: str) -> ParsedTrajectory:
    """Decompose a two-turn output and collect every format defect."""
    defects: list[Defect] = []

    def flag(d: Defect) -> None:
        if d not in defects:
            defects.append(d)

    think = None
    try:
        span = _locate(turn1, "think")
    except MultipleOccurrences:
        flag(Defect.DUPLICATE_TAG)
    else:
        if span is None:
            flag(Defect.MISSING_THINK)
        else:
            think = span.inner

    try:
        action = parse_tool_action(turn1)
    except MalformedToolCall:
        action = None

    rethink_span = answer_span = None
    try:
        rethink_span = _locate(turn2, "rethink")
    except MultipleOccurrences:
        flag(Defect.DUPLICATE_TAG)
    else:
        if rethink_span is None:
            flag(Defect.MISSING_RETHINK)
    try:
        answer_span = _locate(turn2, "answer")
    except MultipleOccurrences:
        flag(Defect.DUPLICATE_TAG)
    else:
        if answer_span is None:
            flag(Defect.MISSING_ANSWER)

    if rethink_span is not None and answer_span is not None:
        if rethink_span.end > answer_span.start:
            flag(Defect.TAG_ORDER_VIOLATION)

    answer_box = None
    if answer_span is not None:
        try:
            answer_box = parse_answer(answer_span.inner)
        except StrayAnswerContent:
            flag(Defect.STRAY_ANSWER_CONTENT)
        except MalformedAnswerJson:
            flag(Defect.MALFORMED_ANSWER_JSON)
        except InvalidBoxGeometry:
            flag(Defect.INVALID_BOX_GEOMETRY)

    return ParsedTrajectory(
        think=think,
        tool_action=action,
        rethink=None if rethink_span is None else rethink_span.inner,
        answer_box=answer_box,
        format_valid=not defects,
        defects=tuple(defects),
    )


def render_tool_call(phrase: str) -> str:
    payload = {"name": TOOL_NAME, "arguments": {"phrase": phrase}}
    return f"<tool_call>{json.dumps(payload, ensure_ascii=False)}</tool_call>"


def render_answer(box: Box) -> str:
    return f"<answer>{json.dumps({'bbox_2d': box.to_list()})}</answer>"


def render_trajectory(traj: ParsedTrajectory) -> tuple[str, str]:
    """Inverse of validate_trajectory for well-formed trajectories."""
    if not traj.format_valid:
        raise ValueError("only valid trajectories can be rendered")
    turn1 = f"<think>{traj.think}</think>"
    if traj.tool_action is not None:
        turn1 += "\n" + render_tool_call(traj.tool_action)
    turn2 = f"<rethink>{traj.rethink}</rethink>\n{render_answer(traj.answer_box)}"
    return turn1, turn2


_DECODER = json.JSONDecoder()


def _first_bbox_object(text: str) -> Box | None:
    """First JSON object in ``text`` that carries a usable ``bbox_2d``."""
    for m in re.finditer(r"\{", text):
        try:
            obj, _ = _DECODER.raw_decode(text, m.start())
        except (ValueError, RecursionError):
            continue
        try:
            return _box_from_payload(obj)
        except (MalformedAnswerJson, InvalidBoxGeometry):
            continue
    return None


def parse_piter_output(text: str | bytes) -> Box:
    """Box from a single-stage response.

    Tolerates code fences, leading prose and list wrappers such as
    ``[{"bbox_2d": [...], "label": "cup"}]``; objects with inverted boxes are
    skipped. Raises NoParsableBox if nothing usable is found.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    box = _first_bbox_object(text)
    if box is None:
        raise NoParsableBox("no JSON object with a 4-number bbox_2d found")
    return box
