"""Pure coordinate math over normalized boxes and points.

Covers the tool-composition needs: re-expressing geometry inside a crop window
and mapping it under quarter-turn counterclockwise rotations.
"""
from __future__ import annotations

from typing import Optional

from orion.errors import OrionError
from orion.model.types import NormBBox, NormPoint

FULL_FRAME = NormBBox(0.0, 0.0, 1.0, 1.0)


class DegenerateCrop(OrionError):
    pass


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else 1.0 if v > 1.0 else v


def rebase_into_crop(b: NormBBox, crop: NormBBox) -> Optional[NormBBox]:
    """Intersect ``b`` with ``crop`` and re-express it in crop-relative coordinates.

    Returns None when the intersection has zero area.
    """
    if crop.w == 0.0 or crop.h == 0.0:
        raise DegenerateCrop("crop window has zero width or height")
    if min(b.x + b.w, crop.x + crop.w) <= max(b.x, crop.x):
        return None
    if min(b.y + b.h, crop.y + crop.h) <= max(b.y, crop.y):
        return None
    x = _clamp01((b.x - crop.x) / crop.w)
    y = _clamp01((b.y - crop.y) / crop.h)
    # Start each extent from w/cw and subtract the overhang actually cut off;
    # the cuts are exactly zero for nested boxes, so identity cases stay exact.
    w = b.w / crop.w
    w -= max(0.0, (crop.x - b.x) / crop.w) + max(0.0, (b.x + b.w - crop.x - crop.w) / crop.w)
    h = b.h / crop.h
    h -= max(0.0, (crop.y - b.y) / crop.h) + max(0.0, (b.y + b.h - crop.y - crop.h) / crop.h)
    if w <= 0.0 or h <= 0.0:  # sliver below float resolution
        return None
    return NormBBox(x, y, min(w, 1.0 - x), min(h, 1.0 - y))


def rebase_point_into_crop(p: NormPoint, crop: NormBBox) -> Optional[NormPoint]:
    """Re-express ``p`` in crop-relative coordinates; None when outside the crop."""
    if crop.w == 0.0 or crop.h == 0.0:
        raise DegenerateCrop("crop window has zero width or height")
    x = (p.x - crop.x) / crop.w
    y = (p.y - crop.y) / crop.h
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        return None
    return NormPoint(x, y)


def rotate90ccw_point(p: NormPoint) -> NormPoint:
    """(x, y) -> (y, 1-x); applying four times is the identity."""
    return NormPoint(p.y, 1.0 - p.x)


def rotate90ccw_bbox(b: NormBBox) -> NormBBox:
    """Image of the box's corners under rotate90ccw_point, re-boxed."""
    return NormBBox(b.y, _clamp01(1.0 - b.x - b.w), b.h, b.w)
