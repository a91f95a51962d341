"""Model and tool backends.

Messages passed to a model are plain dicts ``{"role", "content"}`` with an
optional ``"image"`` reference on user turns; each backend translates them to
its own wire format.
"""

from __future__ import annotations

import base64
import json
import logging
import mimetypes
import os
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol

import httpx

from ..errors import BackendUnavailable, ParseError, ToolUnavailable, Unsatisfiable
from ..geometry import Box
from ..toolsim import ToolPrediction, ToolProfile, jitter_to_iou_band, sample_rng, simulate
from ..trace_parser import render_answer, render_tool_call
from .dataset import Sample

logger = logging.getLogger(__name__)

TOKEN_ENV_VAR = "TRRGR_API_TOKEN"


class ModelClient(Protocol):
    def complete(self, messages: list[dict[str, Any]], *, sample_id: str, turn: int) -> str: ...


class ToolClient(Protocol):
    def ground(self, sample: Sample, phrase: str) -> ToolPrediction: ...


class ScriptedModel:
    """Replays canned responses keyed by ``(sample_id, turn)``; turns start at 1."""

    def __init__(self, responses: Mapping[tuple[str, int], str]):
        self._responses = dict(responses)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScriptedModel":
        path = Path(path)
        responses: dict[tuple[str, int], str] = {}
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key = (str(rec["sample_id"]), int(rec["turn"]))
                    text = rec["response"]
                except (ValueError, KeyError, TypeError) as exc:
                    raise ParseError(str(path), lineno, f"bad script record: {exc}") from None
                if not isinstance(text, str):
                    raise ParseError(str(path), lineno, "response must be a string")
                if key in responses:
                    raise ParseError(str(path), lineno, f"duplicate script entry {key}")
                responses[key] = text
        return cls(responses)

    def complete(self, messages: list[dict[str, Any]], *, sample_id: str, turn: int) -> str:
        try:
            return self._responses[(sample_id, turn)]
        except KeyError:
            raise BackendUnavailable(f"no scripted response for {sample_id!r} turn {turn}") from None


def _image_url(ref: str) -> str:
    if ref.startswith(("http://", "https://", "data:")):
        return ref
    p = Path(ref)
    if p.is_file():
        mime = mimetypes.guess_type(p.name)[0] or "image/jpeg"
        return f"data:{mime};base64," + base64.b64encode(p.read_bytes()).decode("ascii")
    return ref


def to_chat_messages(messages: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """Neutral messages to the OpenAI-style chat format with image parts."""
    out = []
    for m in messages:
        if m.get("image"):
            content = [
                {"type": "image_url", "image_url": {"url": _image_url(m["image"])}},
                {"type": "text", "text": m["content"]},
            ]
            out.append({"role": m["role"], "content": content})
        else:
            out.append({"role": m["role"], "content": m["content"]})
    return out


class HttpModel:
    """Chat-completions endpoint (vLLM, SGLang, OpenAI-compatible servers).

    Each call is retried once; a second failure raises BackendUnavailable.
    """

    def __init__(
        self,
        url: str,
        model: str = "default",
        *,
        token: str | None = None,
        temperature: float = 0.0,
        max_tokens: int = 1024,
        timeout: float = 120.0,
        client: httpx.Client | None = None,
    ):
        self.url = url
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        token = token if token is not None else os.environ.get(TOKEN_ENV_VAR)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = headers

    def complete(self, messages: list[dict[str, Any]], *, sample_id: str, turn: int) -> str:
        payload = {
            "model": self.model,
            "messages": to_chat_messages(messages),
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        last: Exception | None = None
        for attempt in range(2):
            try:
                resp = self._client.post(self.url, json=payload, headers=self._headers)
                resp.raise_for_status()
                content = resp.json()["choices"][0]["message"]["content"]
                if not isinstance(content, str):
                    raise ValueError("non-text completion")
                return content
            except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
                last = exc
                logger.warning("model call failed for %s turn %d (attempt %d): %s", sample_id, turn, attempt + 1, exc)
        raise BackendUnavailable(f"{self.url}: {last}")

    def close(self) -> None:
        self._client.close()


class CachedTool:
    """Looks predictions up by sample id; the query phrase is ignored."""

    def __init__(self, predictions: Mapping[str, ToolPrediction]):
        self._preds = dict(predictions)

    def ground(self, sample: Sample, phrase: str) -> ToolPrediction:
        try:
            return self._preds[sample.sample_id]
        except KeyError:
            raise ToolUnavailable(f"no cached tool prediction for {sample.sample_id!r}") from None


class SimulatedTool:
    def __init__(self, profile: ToolProfile):
        self.profile = profile

    def ground(self, sample: Sample, phrase: str) -> ToolPrediction:
        try:
            return simulate(sample.gt_bbox, sample.width, sample.height, self.profile, sample.sample_id)
        except Unsatisfiable as exc:
            raise ToolUnavailable(str(exc)) from None


# --- scripted policies -------------------------------------------------------

POLICIES = ("echo", "oracle", "noisy")


def _policy_box(policy: str, sample: Sample, tool_box: Box | None, seed: int) -> Box | None | str:
    """Box the policy answers with, None for a null box, or a prose string."""
    if policy == "echo":
        return tool_box
    if policy == "oracle":
        return sample.gt_bbox
    if policy != "noisy":
        raise ValueError(f"unknown policy {policy!r}; choose from {POLICIES}")
    rng = sample_rng(seed, "policy:" + sample.sample_id)
    u = rng.random()
    bounds = (float(sample.width), float(sample.height))
    if u < 0.35:
        return jitter_to_iou_band(sample.gt_bbox, (0.5, 1.0), rng, bounds)
    if u < 0.65:
        return tool_box
    if u < 0.9:
        return jitter_to_iou_band(sample.gt_bbox, (0.02, 0.49), rng, bounds)
    return "I could not find the object in the image."


def _answer_json(box: Box | None) -> str:
    return json.dumps({"bbox_2d": None if box is None else box.to_list()})


def build_script(
    samples: Iterable[Sample],
    tool_preds: Mapping[str, ToolPrediction],
    policy: str,
    protocol: str,
    seed: int = 0,
) -> list[dict[str, Any]]:
    """Canned responses for a ScriptedModel.

    ``echo`` repeats the tool box, ``oracle`` answers with ground truth,
    ``noisy`` mixes good, echoed, bad and unparsable answers per sample.
    """
    records = []
    for s in samples:
        pred = tool_preds.get(s.sample_id)
        answer = _policy_box(policy, s, None if pred is None else pred.bbox, seed)
        if protocol == "piter":
            text = answer if isinstance(answer, str) else _answer_json(answer)
            records.append({"sample_id": s.sample_id, "turn": 1, "response": text})
        elif protocol == "trrgr":
            turn1 = f"<think>Looking for {s.expression}.</think>\n{render_tool_call(s.expression)}"
            if isinstance(answer, str):
                turn2 = f"<rethink>{answer}</rethink>"
            elif answer is None:
                turn2 = f"<rethink>No usable box.</rethink>\n<answer>{_answer_json(None)}</answer>"
            else:
                turn2 = f"<rethink>Checked the tool box.</rethink>\n{render_answer(answer)}"
            records.append({"sample_id": s.sample_id, "turn": 1, "response": turn1})
            records.append({"sample_id": s.sample_id, "turn": 2, "response": turn2})
        else:
            raise ValueError(f"unknown protocol {protocol!r}")
    return records


def write_script(records: Iterable[dict[str, Any]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")


def script_model(records: Iterable[dict[str, Any]]) -> ScriptedModel:
    return ScriptedModel({(r["sample_id"], int(r["turn"])): r["response"] for r in records})
