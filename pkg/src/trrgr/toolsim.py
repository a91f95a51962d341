"""Synthetic grounding tool and cached tool predictions.

The simulator reproduces the three failure modes seen with real grounding
tools (imprecise boundary, wrong object, no box at all) at configurable
rates. Every draw comes from a generator keyed by ``(seed, sample_id)``, so a
prediction never depends on which other samples were simulated or in what
order.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DuplicateSampleId, InvalidBoxGeometry, ParseError, UnknownPreset, Unsatisfiable
from .geometry import Box, area, iou

# Grounding DINO-T and EVF-SAM Acc@0.5 on RefCOCO testA/testB, RefCOCO+ testA/testB, RefCOCOg test
WEAK_TOOL_SPLIT_ACC = (49.9, 37.8, 50.0, 38.7, 54.6)
STRONG_TOOL_SPLIT_ACC = (94.2, 90.3, 90.2, 81.7, 88.9)

WRONG_OBJECT_MAX_IOU = 0.05
BAND_TOLERANCE = 1e-6


class Category(str, enum.Enum):
    CORRECT = "correct"
    BOUNDARY = "boundary"
    WRONG = "wrong"
    MISSING = "missing"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ToolProfile:
    p_correct: float
    p_boundary: float
    p_wrong: float
    p_missing: float
    correct_band: tuple[float, float] = (0.5, 1.0)
    boundary_band: tuple[float, float] = (0.1, 0.45)
    seed: int = 0
    tau: float = 0.5
    name: str = "custom"

    def __post_init__(self) -> None:
        probs = self.probabilities
        if any(p < 0 for p in probs):
            raise ValueError(f"probabilities must be non-negative, got {probs}")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {sum(probs)}")
        lo, hi = self.correct_band
        if not self.tau <= lo <= hi <= 1.0:
            raise ValueError(f"correct_band {self.correct_band} must lie in [{self.tau}, 1]")
        lo, hi = self.boundary_band
        if not 0.0 < lo <= hi < self.tau:
            raise ValueError(f"boundary_band {self.boundary_band} must lie in (0, {self.tau})")

    @property
    def probabilities(self) -> tuple[float, float, float, float]:
        return (self.p_correct, self.p_boundary, self.p_wrong, self.p_missing)

    def with_seed(self, seed: int) -> "ToolProfile":
        return ToolProfile(
            self.p_correct, self.p_boundary, self.p_wrong, self.p_missing,
            self.correct_band, self.boundary_band, seed, self.tau, self.name,
        )


@dataclass(frozen=True)
class ToolPrediction:
    sample_id: str
    bbox: Box | None
    source: str = "simulated"
    category: Category | None = None
    tool: str | None = None

    def __post_init__(self) -> None:
        if self.source not in ("simulated", "cached"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.source == "cached" and self.category is not None:
            raise ValueError("cached predictions carry no category")

    def to_json(self) -> dict:
        rec = {
            "sample_id": self.sample_id,
            "tool": self.tool or "",
            "bbox": None if self.bbox is None else self.bbox.to_list(),
        }
        if self.category is not None:
            rec["category"] = self.category.value
        return rec


def sample_rng(seed: int, sample_id: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}\x00{sample_id}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def shift_for_iou(length: float, target: float) -> float:
    """Shift along one axis that gives IoU ``target`` with the unshifted box.

    A shift ``s`` of a box of side ``length`` gives IoU ``(length - s) / (length + s)``.
    """
    return length * (1.0 - target) / (1.0 + target)


def _in_bounds(b: tuple[float, float, float, float], bounds: tuple[float, float] | None) -> bool:
    x1, y1, x2, y2 = b
    if x1 < 0 or y1 < 0:
        return False
    return bounds is None or (x2 <= bounds[0] and y2 <= bounds[1])


def _candidates(gt: Box, target: float, mode: str, sign: float):
    w, h = gt.width, gt.height
    if mode == "shift_x":
        s = sign * shift_for_iou(w, target)
        return (gt.x1 + s, gt.y1, gt.x2 + s, gt.y2)
    if mode == "shift_y":
        s = sign * shift_for_iou(h, target)
        return (gt.x1, gt.y1 + s, gt.x2, gt.y2 + s)
    # scaling about the centre: IoU is k^2 when shrinking, 1/k^2 when growing
    k = math.sqrt(target) if mode == "shrink" else 1.0 / math.sqrt(target)
    cx, cy = (gt.x1 + gt.x2) / 2, (gt.y1 + gt.y2) / 2
    return (cx - k * w / 2, cy - k * h / 2, cx + k * w / 2, cy + k * h / 2)


def jitter_to_iou_band(
    gt: Box,
    band: tuple[float, float],
    rng: np.random.Generator,
    bounds: tuple[float, float] | None = None,
) -> Box:
    """Shifted or rescaled copy of ``gt`` whose IoU with ``gt`` falls in ``band``.

    ``bounds`` (image width, height) keeps the result inside the image;
    shrinking always fits, so a result always exists for positive-area boxes.
    """
    lo, hi = band
    if not (0.0 < lo <= hi <= 1.0):
        raise Unsatisfiable(f"IoU band {band} is empty or outside (0, 1]")
    if area(gt) <= 0:
        raise Unsatisfiable("cannot jitter a zero-area box")
    if lo >= 1.0:
        return gt
    # stay strictly inside the band so rounding never crosses a threshold
    margin = min(1e-9, (hi - lo) / 4)
    target = float(rng.uniform(lo + margin, hi - margin)) if hi > lo else lo
    if target >= 1.0:
        return gt

    modes = ["shift_x", "shift_y", "grow", "shrink"]
    order = [modes[i] for i in rng.permutation(len(modes))]
    sign = 1.0 if rng.random() < 0.5 else -1.0
    for mode in order:
        for sg in ((sign, -sign) if mode.startswith("shift") else (1.0,)):
            coords = _candidates(gt, target, mode, sg)
            if not _in_bounds(coords, bounds):
                continue
            box = Box(*coords)
            if lo - BAND_TOLERANCE <= iou(gt, box) <= hi + BAND_TOLERANCE:
                return box
    raise Unsatisfiable(f"could not realise IoU {target:.6f} for {gt}")


def _box_at(x: float, y: float, w: float, h: float, width: float, height: float) -> Box:
    # min() keeps float rounding from pushing the far edge past the image
    return Box(x, y, min(x + w, float(width)), min(y + h, float(height)))


def _place_wrong(gt: Box, width: float, height: float, rng: np.random.Generator) -> Box:
    """A gt-sized box elsewhere in the image with IoU below 0.05."""
    for scale in (1.0, 0.5):
        w, h = gt.width * scale, gt.height * scale
        if w > width or h > height:
            continue
        for _ in range(200):
            x, y = float(rng.uniform(0, width - w)), float(rng.uniform(0, height - h))
            cand = _box_at(x, y, w, h, width, height)
            if iou(cand, gt) < WRONG_OBJECT_MAX_IOU:
                return cand
        # rejection sampling failed: the free area is small, enumerate a grid
        grid = [
            _box_at(float(x), float(y), w, h, width, height)
            for x in np.linspace(0, width - w, 33)
            for y in np.linspace(0, height - h, 33)
        ]
        feasible = [b for b in grid if iou(b, gt) < WRONG_OBJECT_MAX_IOU]
        if feasible:
            return feasible[int(rng.integers(len(feasible)))]
    raise Unsatisfiable(
        f"no room for a wrong-object box of size {gt.width}x{gt.height} in a {width}x{height} image"
    )


def _draw_category(profile: ToolProfile, u: float) -> Category:
    cats = list(Category)
    cum = np.cumsum(profile.probabilities)
    idx = int(np.searchsorted(cum, u, side="right"))
    if idx < len(cats):
        return cats[idx]
    # u landed in the float slack above cum[-1]: take the last category with weight
    return next(c for c, p in zip(reversed(cats), reversed(profile.probabilities)) if p > 0)


def simulate(
    gt: Box, image_w: float, image_h: float, profile: ToolProfile, sample_id: str
) -> ToolPrediction:
    rng = sample_rng(profile.seed, sample_id)
    category = _draw_category(profile, rng.random())
    bounds = (float(image_w), float(image_h))
    if category is Category.MISSING:
        bbox = None
    elif category is Category.WRONG:
        bbox = _place_wrong(gt, image_w, image_h, rng)
    else:
        band = profile.correct_band if category is Category.CORRECT else profile.boundary_band
        bbox = jitter_to_iou_band(gt, band, rng, bounds)
    return ToolPrediction(sample_id, bbox, "simulated", category, profile.name)


def _weak_gdt() -> ToolProfile:
    p = round(sum(WEAK_TOOL_SPLIT_ACC) / len(WEAK_TOOL_SPLIT_ACC) / 100, 6)
    rest = (1.0 - p) / 3
    return ToolProfile(p, rest, rest, 1.0 - p - 2 * rest, (0.5, 0.95), (0.05, 0.45), name="weak_gdt")


def _strong_evfsam() -> ToolProfile:
    p = round(sum(STRONG_TOOL_SPLIT_ACC) / len(STRONG_TOOL_SPLIT_ACC) / 100, 6)
    rest = 1.0 - p
    # mask-derived boxes fail mostly by loose/tight boundaries
    boundary, wrong = 0.7 * rest, 0.2 * rest
    return ToolProfile(p, boundary, wrong, rest - boundary - wrong, (0.6, 0.98), (0.25, 0.49), name="strong_evfsam")


PRESETS = {"weak_gdt": _weak_gdt, "strong_evfsam": _strong_evfsam}


def preset(name: str, seed: int = 0) -> ToolProfile:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown tool preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory().with_seed(seed)


def load_cache(path: str | Path) -> dict[str, ToolPrediction]:
    """Read ``{"sample_id", "tool", "bbox"}`` JSONL records; ``bbox`` may be null."""
    path = Path(path)
    out: dict[str, ToolPrediction] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                raise ParseError(str(path), lineno, f"invalid JSON: {exc}") from None
            if not isinstance(rec, dict) or not isinstance(rec.get("sample_id"), str) or "bbox" not in rec:
                raise ParseError(str(path), lineno, 'expected {"sample_id": str, "bbox": [...] | null}')
            sid = rec["sample_id"]
            if sid in out:
                raise DuplicateSampleId(sid, lineno)
            raw = rec["bbox"]
            try:
                bbox = None if raw is None else Box.from_raw(raw)
            except InvalidBoxGeometry as exc:
                raise ParseError(str(path), lineno, str(exc)) from None
            tool = rec.get("tool")
            out[sid] = ToolPrediction(sid, bbox, "cached", None, tool if isinstance(tool, str) else None)
    return out


def write_cache(preds: Iterable[ToolPrediction], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(json.dumps(p.to_json()) + "\n")
