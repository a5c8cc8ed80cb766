"""Axis-aligned box primitives in absolute pixel coordinates."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box as (x1, y1, x2, y2) corners, in pixels.

    Width and height must be strictly positive and every coordinate
    finite; anything else raises at construction so degenerate boxes
    never travel through the pipeline.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"box coordinate {name}={value!r} is not a number")
            if not math.isfinite(value):
                raise ValidationError(f"box coordinate {name}={value!r} is not finite")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValidationError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2}): "
                "width and height must be strictly positive"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def as_xyxy(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def as_xywh(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.width, self.height)

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BoundingBox":
        return cls(x, y, x + w, y + h)


def box_area(box: BoundingBox) -> float:
    """Area in square pixels; strictly positive for any valid box."""
    return box.width * box.height


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    if iw <= 0.0:
        return 0.0
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (box_area(a) + box_area(b) - inter)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def clip_to_image(box: BoundingBox, width: float, height: float) -> BoundingBox:
    """Clamp a box to [0, width] x [0, height].

    Raises ValidationError when nothing of the box remains inside the
    image; callers at the backend boundary turn that into a protocol
    error naming the offending record.
    """
    x1 = min(max(box.x1, 0.0), width)
    y1 = min(max(box.y1, 0.0), height)
    x2 = min(max(box.x2, 0.0), width)
    y2 = min(max(box.y2, 0.0), height)
    if not (x1 < x2 and y1 < y2):
        raise ValidationError(
            f"box {box.as_xyxy()} lies outside the {width}x{height} image bounds"
        )
    return BoundingBox(x1, y1, x2, y2)
