"""Box and detection geometry plus the detection filters.

Everything here is an immutable value or a pure function; the canonical box
representation is absolute-pixel xyxy with the origin at the top-left corner.
Normalized coordinates exist only at the backend protocol boundary and are
converted with :func:`normalized_to_pixels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

# Slack allowed when validating normalized coordinates against [0, 1].
NORM_TOL = 1e-6


@dataclass(frozen=True)
class ImageDims:
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dims must be at least 1x1, got {self.width}x{self.height}")

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates; x grows right, y grows down."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"box corners out of order: ({self.x0},{self.y0},{self.x1},{self.y1})")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def clamped(self, dims: ImageDims) -> "BBox":
        """Clip the box to the image rectangle."""
        return BBox(
            min(max(self.x0, 0.0), dims.width),
            min(max(self.y0, 0.0), dims.height),
            min(max(self.x1, 0.0), dims.width),
            min(max(self.y1, 0.0), dims.height),
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    def iou(self, other: "BBox") -> float:
        ix0 = max(self.x0, other.x0)
        iy0 = max(self.y0, other.y0)
        ix1 = min(self.x1, other.x1)
        iy1 = min(self.y1, other.y1)
        if ix1 <= ix0 or iy1 <= iy0:
            return 0.0
        inter = (ix1 - ix0) * (iy1 - iy0)
        union = box_area(self) + box_area(other) - inter
        return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class Detection:
    """One detector output: a box, its confidence, and the matched phrase."""

    box: BBox
    confidence: float
    phrase: str = ""
    class_name: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")


@dataclass(frozen=True)
class FilterParams:
    box_threshold: float
    text_threshold: float
    max_relative_area: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.box_threshold <= 1.0:
            raise ValueError(f"box_threshold out of [0,1]: {self.box_threshold}")
        if not 0.0 <= self.text_threshold <= 1.0:
            raise ValueError(f"text_threshold out of [0,1]: {self.text_threshold}")
        if not 0.0 < self.max_relative_area <= 1.0:
            raise ValueError(f"max_relative_area out of (0,1]: {self.max_relative_area}")


def box_area(box: BBox) -> float:
    """Area in square pixels; degenerate boxes yield 0."""
    return box.width * box.height


def relative_area(box: BBox, dims: ImageDims) -> float:
    """Box area divided by whole-image area.

    In [0, 1] whenever the box is clamped to the image bounds.
    """
    if dims.area <= 0:
        raise ValueError("image has zero area")
    return box_area(box) / dims.area


def filter_by_confidence(dets: Sequence[Detection], box_threshold: float) -> list[Detection]:
    """Keep detections with confidence >= box_threshold, order preserved.

    Boundary values survive: the filter removes only confidences strictly
    below the threshold.
    """
    return [d for d in dets if d.confidence >= box_threshold]


def filter_by_relative_area(
    dets: Sequence[Detection], dims: ImageDims, max_relative_area: float
) -> tuple[list[Detection], list[Detection]]:
    """Partition detections into (kept, rejected) by relative box area.

    Kept are those with relative area <= max_relative_area (boundary values
    survive); order is preserved within both lists.
    """
    kept: list[Detection] = []
    rejected: list[Detection] = []
    for d in dets:
        if relative_area(d.box, dims) <= max_relative_area:
            kept.append(d)
        else:
            rejected.append(d)
    return kept, rejected


def _snap_floor(v: float) -> float:
    r = round(v)
    return float(r) if abs(v - r) < NORM_TOL else math.floor(v)


def _snap_ceil(v: float) -> float:
    r = round(v)
    return float(r) if abs(v - r) < NORM_TOL else math.ceil(v)


def normalized_to_pixels(nbox: Sequence[float], dims: ImageDims) -> BBox:
    """Convert a normalized xyxy box in [0,1]^4 to a pixel BBox.

    Mins are floored and maxes are ceiled so the pixel box never shrinks
    below the detector's extent; products within NORM_TOL of an integer snap
    to it, so k/width maps back to k instead of picking up a stray pixel.
    The result is clamped to the image. Coordinates outside [0,1] by more
    than NORM_TOL are rejected.
    """
    if len(nbox) != 4:
        raise ValueError(f"normalized box needs 4 coordinates, got {len(nbox)}")
    nx0, ny0, nx1, ny1 = (float(v) for v in nbox)
    for v in (nx0, ny0, nx1, ny1):
        if v < -NORM_TOL or v > 1.0 + NORM_TOL:
            raise ValueError(f"normalized coordinate out of [0,1]: {v}")
    if nx1 < nx0 - NORM_TOL or ny1 < ny0 - NORM_TOL:
        raise ValueError(f"normalized box corners out of order: {nbox}")
    nx0, ny0 = max(nx0, 0.0), max(ny0, 0.0)
    nx1, ny1 = min(max(nx1, nx0), 1.0), min(max(ny1, ny0), 1.0)
    box = BBox(
        _snap_floor(nx0 * dims.width),
        _snap_floor(ny0 * dims.height),
        _snap_ceil(nx1 * dims.width),
        _snap_ceil(ny1 * dims.height),
    )
    return box.clamped(dims)


def pixels_to_normalized(box: BBox, dims: ImageDims) -> tuple[float, float, float, float]:
    """Inverse of normalized_to_pixels up to the floor/ceil rounding."""
    return (box.x0 / dims.width, box.y0 / dims.height, box.x1 / dims.width, box.y1 / dims.height)
