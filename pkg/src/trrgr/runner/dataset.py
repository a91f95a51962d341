"""Referring-expression samples: JSONL ingestion and a synthetic generator."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from ..errors import DuplicateSampleId, InvalidBoxGeometry, InvariantViolation, ParseError
from ..geometry import Box

_FIELDS = ("sample_id", "image", "width", "height", "expression", "gt_bbox")


@dataclass(frozen=True)
class Sample:
    sample_id: str
    image: str
    width: int
    height: int
    expression: str
    gt_bbox: Box

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "image": self.image,
            "width": self.width,
            "height": self.height,
            "expression": self.expression,
            "gt_bbox": self.gt_bbox.to_list(),
        }


def _check(rec: dict, path: str, lineno: int) -> Sample:
    missing = [k for k in _FIELDS if k not in rec]
    if missing:
        raise ParseError(path, lineno, f"missing fields {missing}")
    sid = rec["sample_id"]
    if not isinstance(sid, str) or not sid:
        raise ParseError(path, lineno, "sample_id must be a non-empty string")
    w, h = rec["width"], rec["height"]
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in (w, h)):
        raise ParseError(path, lineno, "width and height must be integers")
    if w <= 0 or h <= 0:
        raise InvariantViolation(sid, f"image size {w}x{h} must be positive")
    expr = rec["expression"]
    if not isinstance(expr, str) or not expr.strip():
        raise InvariantViolation(sid, "expression must be non-empty")
    raw = rec["gt_bbox"]
    if not isinstance(raw, list) or len(raw) != 4:
        raise ParseError(path, lineno, "gt_bbox must be a list of 4 numbers")
    try:
        gt = Box(*raw)
    except InvalidBoxGeometry as exc:
        raise InvariantViolation(sid, f"gt_bbox {raw}: {exc}") from None
    if gt.x2 > w or gt.y2 > h:
        raise InvariantViolation(sid, f"gt_bbox {raw} extends beyond the {w}x{h} image")
    return Sample(sid, str(rec["image"]), w, h, expr, gt)


def load_dataset(path: str | Path) -> list[Sample]:
    path = Path(path)
    samples: list[Sample] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                raise ParseError(str(path), lineno, f"invalid JSON: {exc}") from None
            if not isinstance(rec, dict):
                raise ParseError(str(path), lineno, "expected a JSON object")
            sample = _check(rec, str(path), lineno)
            if sample.sample_id in seen:
                raise DuplicateSampleId(sample.sample_id, lineno)
            seen.add(sample.sample_id)
            samples.append(sample)
    return samples


def write_dataset(samples: Iterable[Sample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


_OBJECTS = ("cup", "dog", "man", "woman", "car", "chair", "umbrella", "pizza", "bus", "giraffe")
_COLOURS = ("red", "blue", "white", "black", "green", "yellow")
_PLACES = ("on the left", "on the right", "in the middle", "at the back", "closest to the camera")


def synthetic_dataset(n: int, seed: int = 0, prefix: str = "syn") -> list[Sample]:
    """``n`` random samples with integer ground-truth boxes.

    Boxes cover 10-40% of each image side, which always leaves room for a
    non-overlapping distractor box.
    """
    rng = np.random.default_rng(seed)
    width = int(np.log10(max(n, 1))) + 1
    out = []
    for i in range(n):
        w = int(rng.integers(320, 1281))
        h = int(rng.integers(240, 961))
        bw = int(rng.integers(w // 10, 2 * w // 5 + 1))
        bh = int(rng.integers(h // 10, 2 * h // 5 + 1))
        x1 = int(rng.integers(0, w - bw + 1))
        y1 = int(rng.integers(0, h - bh + 1))
        expr = (
            f"the {_COLOURS[rng.integers(len(_COLOURS))]} "
            f"{_OBJECTS[rng.integers(len(_OBJECTS))]} "
            f"{_PLACES[rng.integers(len(_PLACES))]}"
        )
        sid = f"{prefix}-{i:0{width}d}"
        out.append(Sample(sid, f"images/{sid}.jpg", w, h, expr, Box(x1, y1, x1 + bw, y1 + bh)))
    return out
