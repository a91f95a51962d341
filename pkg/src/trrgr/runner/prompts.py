"""Prompt templates.

The PiTER template must contain ``{Question}`` and ``{tool results}`` exactly
once each. Substitution is plain string replacement because templates carry
literal JSON braces.
"""

from __future__ import annotations

from ..errors import ConfigError
from ..geometry import Box, format_box
from ..toolsim import ToolPrediction

QUESTION = "{Question}"
TOOL_RESULTS = "{tool results}"

PITER_TEMPLATE_VERSION = "1"

DEFAULT_PITER_TEMPLATE = (
    "Locate the object referred to by the expression below and report its bounding box.\n"
    "Expression: {Question}\n"
    "A grounding tool was run on this image for the same expression. Its predicted box, "
    "in absolute pixel coordinates [x1, y1, x2, y2], is: {tool results}\n"
    "(null means the tool returned no box.) Use the tool box as a reference only: it may be "
    "exact, loose, shifted, on the wrong object, or missing. Keep it if it is right, "
    "otherwise give the correct box.\n"
    "Respond in a single step with JSON only, in the form "
    '{"bbox_2d": [x1, y1, x2, y2]}.'
)

DEFAULT_PITER_SYSTEM_PROMPT = "You are a helpful assistant."

DEFAULT_TRRGR_SYSTEM_PROMPT = (
    "You ground referring expressions in images, working in two rounds.\n"
    "Round 1: reason about the image and the expression inside <think> </think>, then ask the "
    "grounding tool for a reference box with\n"
    '<tool_call>{"name": "ground", "arguments": {"phrase": "<phrase to ground>"}}</tool_call>\n'
    "Round 2: you will receive the tool box. Check it against your own analysis inside "
    "<rethink> </rethink>, keep or correct it, and give the final box as\n"
    '<answer>{"bbox_2d": [x1, y1, x2, y2]}</answer>\n'
    "Coordinates are absolute pixels of the original image."
)

DEFAULT_TRRGR_QUESTION_TEMPLATE = "Referring expression: {Question}"

DEFAULT_FEEDBACK_TEMPLATE = (
    'Grounding tool result: {"bbox_2d": {tool results}}\n'
    "The tool may be wrong. Rethink and give your final answer."
)


def check_template(template: str, placeholders: tuple[str, ...] = (QUESTION, TOOL_RESULTS)) -> None:
    for ph in placeholders:
        n = template.count(ph)
        if n != 1:
            raise ConfigError(f"template must contain {ph} exactly once (found {n})")


def render_piter_prompt(template: str, expression: str, tool_pred: ToolPrediction | Box | None) -> str:
    box = tool_pred.bbox if isinstance(tool_pred, ToolPrediction) else tool_pred
    # tool text first so an expression containing "{tool results}" is left alone
    return template.replace(TOOL_RESULTS, format_box(box)).replace(QUESTION, expression)


def render_question(template: str, expression: str) -> str:
    return template.replace(QUESTION, expression)


def render_feedback(template: str, box: Box | None) -> str:
    return template.replace(TOOL_RESULTS, format_box(box))
