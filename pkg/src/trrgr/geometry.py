"""Axis-aligned boxes, IoU and mask-to-box conversion.

Coordinates are continuous pixels with the origin at the top-left corner.
``x2``/``y2`` are exclusive edges, so the pixel at column ``c``, row ``r``
spans ``[c, r, c + 1, r + 1]`` and integer boxes agree exactly with pixel
counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import InvalidBoxGeometry


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        coords = (self.x1, self.y1, self.x2, self.y2)
        for v in coords:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InvalidBoxGeometry(f"non-numeric coordinate {v!r}")
            if not math.isfinite(v):
                raise InvalidBoxGeometry(f"non-finite coordinate in {coords}")
            if v < 0:
                raise InvalidBoxGeometry(f"negative coordinate in {coords}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise InvalidBoxGeometry(f"inverted box {list(coords)}")
        # normalise to float so equality/hash do not depend on int vs float input
        for name, v in zip(("x1", "y1", "x2", "y2"), coords):
            object.__setattr__(self, name, float(v))

    @classmethod
    def from_raw(cls, coords: Sequence[Any]) -> "Box":
        """Build a box from untrusted model output.

        Checks arity, numeric type, finiteness and ordering; negative
        coordinates are clipped to 0 because they only ever fall outside the
        image and scoring clamps to the image anyway.
        """
        if not isinstance(coords, (list, tuple)) or len(coords) != 4:
            raise InvalidBoxGeometry(f"expected 4 coordinates, got {coords!r}")
        vals = []
        for v in coords:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InvalidBoxGeometry(f"non-numeric coordinate {v!r}")
            if not math.isfinite(v):
                raise InvalidBoxGeometry(f"non-finite coordinate {v!r}")
            vals.append(float(v))
        x1, y1, x2, y2 = vals
        if x1 > x2 or y1 > y2:
            raise InvalidBoxGeometry(f"inverted box {vals}")
        return cls(max(x1, 0.0), max(y1, 0.0), max(x2, 0.0), max(y2, 0.0))

    def to_list(self) -> list[float | int]:
        """Coordinates as a list, integral values rendered as ints."""
        return [_compact(v) for v in self.as_tuple()]

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1


def _compact(v: float) -> float | int:
    return int(v) if float(v).is_integer() else v


def format_box(box: Box | None) -> str:
    """Render as ``[x1, y1, x2, y2]`` (ints when integral) or ``null``."""
    if box is None:
        return "null"
    return "[" + ", ".join(repr(v) for v in box.to_list()) + "]"


def area(b: Box) -> float:
    return (b.x2 - b.x1) * (b.y2 - b.y1)


def intersection_area(a: Box, b: Box) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0.0 when the union is empty."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def clamp_to_image(b: Box | Sequence[float], width: float, height: float) -> Box:
    """Clip a box (or raw ``[x1, y1, x2, y2]``) into ``[0, width] x [0, height]``.

    Raw sequences may carry negative or out-of-image values; ordering must
    already hold.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"image size must be positive, got {width}x{height}")
    x1, y1, x2, y2 = b.as_tuple() if isinstance(b, Box) else (float(v) for v in b)
    if x1 > x2 or y1 > y2:
        raise InvalidBoxGeometry(f"inverted box {[x1, y1, x2, y2]}")

    def clip(v: float, hi: float) -> float:
        return min(max(v, 0.0), float(hi))

    return Box(clip(x1, width), clip(y1, height), clip(x2, width), clip(y2, height))


def box_inside(b: Box, width: float, height: float) -> bool:
    return b.x2 <= width and b.y2 <= height


@dataclass(frozen=True)
class BinaryMask:
    """Row-major run-length mask; ``counts`` alternate zeros then ones."""

    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"mask size must be positive, got {self.width}x{self.height}")
        if any(c < 0 for c in self.counts):
            raise ValueError("run lengths must be non-negative")
        if sum(self.counts) != self.width * self.height:
            raise ValueError(
                f"runs sum to {sum(self.counts)}, expected {self.width * self.height}"
            )

    @classmethod
    def from_json(cls, obj: dict) -> "BinaryMask":
        return cls(width=int(obj["width"]), height=int(obj["height"]), counts=tuple(obj["counts"]))

    def to_json(self) -> dict:
        return {"width": self.width, "height": self.height, "counts": list(self.counts)}

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "BinaryMask":
        arr = np.asarray(arr, dtype=bool)
        h, w = arr.shape
        flat = arr.ravel()
        # run boundaries; prepend a virtual 0 so the first run always counts zeros
        padded = np.concatenate([[False], flat])
        change = np.flatnonzero(padded[1:] != padded[:-1])
        edges = np.concatenate([[0], change, [flat.size]])
        return cls(width=w, height=h, counts=tuple(np.diff(edges).tolist()))

    def to_array(self) -> np.ndarray:
        values = np.arange(len(self.counts)) % 2
        flat = np.repeat(values.astype(bool), self.counts)
        return flat.reshape(self.height, self.width)


def mask_to_box(m: BinaryMask) -> Box | None:
    """Tightest box around the set pixels, or ``None`` for an empty mask."""
    arr = m.to_array()
    rows = np.flatnonzero(arr.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(arr.any(axis=0))
    return Box(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)

