"""Binary masks and their run-length wire form.

A mask is a row-major boolean raster. The RLE wire form follows the common
uncompressed convention: column-major pixel order (top-to-bottom, then
left-to-right), counts alternating background/foreground and starting with
background, summing to height*width.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BBox, ImageDims


@dataclass(frozen=True, eq=False)
class BinaryMask:
    data: np.ndarray  # bool, shape (height, width)

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        arr = arr.astype(bool, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def empty(cls, dims: ImageDims) -> "BinaryMask":
        return cls(np.zeros((dims.height, dims.width), dtype=bool))

    @classmethod
    def full(cls, dims: ImageDims) -> "BinaryMask":
        return cls(np.ones((dims.height, dims.width), dtype=bool))

    @classmethod
    def from_box(cls, box: BBox, dims: ImageDims) -> "BinaryMask":
        """Rasterize a pixel box: all pixels whose center lies inside the box."""
        arr = np.zeros((dims.height, dims.width), dtype=bool)
        b = box.clamped(dims)
        y0, y1 = int(round(b.y0)), int(round(b.y1))
        x0, x1 = int(round(b.x0)), int(round(b.x1))
        arr[y0:y1, x0:x1] = True
        return cls(arr)

    @property
    def dims(self) -> ImageDims:
        h, w = self.data.shape
        return ImageDims(width=w, height=h)

    @property
    def count(self) -> int:
        return int(self.data.sum())

    @property
    def is_empty(self) -> bool:
        return not self.data.any()

    def bbox(self) -> BBox | None:
        """Tight pixel bounding box of the foreground, or None when empty."""
        ys, xs = np.nonzero(self.data)
        if ys.size == 0:
            return None
        return BBox(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        self._check_dims(other)
        return BinaryMask(self.data | other.data)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        self._check_dims(other)
        return BinaryMask(self.data & other.data)

    def __xor__(self, other: "BinaryMask") -> "BinaryMask":
        self._check_dims(other)
        return BinaryMask(self.data ^ other.data)

    def _check_dims(self, other: "BinaryMask") -> None:
        if self.data.shape != other.data.shape:
            raise ValueError(f"mask dims differ: {self.data.shape} vs {other.data.shape}")


@dataclass(frozen=True)
class MaskRLE:
    size: tuple[int, int]  # (height, width)
    counts: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        h, w = self.size
        object.__setattr__(self, "size", (int(h), int(w)))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    def to_wire(self) -> dict:
        return {"size": [self.size[0], self.size[1]], "counts": list(self.counts)}

    @classmethod
    def from_wire(cls, obj: object) -> "MaskRLE":
        """Parse and fully validate a wire-format mask object.

        Raises ValueError on any structural problem, including counts that
        do not sum to h*w.
        """
        if not isinstance(obj, dict):
            raise ValueError(f"mask must be an object, got {type(obj).__name__}")
        size = obj.get("size")
        if not isinstance(size, (list, tuple)) or len(size) != 2:
            raise ValueError(f"mask size must be [H, W], got {size!r}")
        for v in size:
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ValueError(f"mask size entries must be positive integers, got {size!r}")
        h, w = int(size[0]), int(size[1])
        counts = obj.get("counts")
        if not isinstance(counts, (list, tuple)):
            raise ValueError(f"mask counts must be a list, got {type(counts).__name__}")
        for c in counts:
            if isinstance(c, bool) or not isinstance(c, int) or c < 0:
                raise ValueError(f"mask counts must be nonnegative integers, got {c!r}")
        total = sum(counts)
        if total != h * w:
            raise ValueError(f"mask counts sum to {total}, expected {h * w}")
        return cls(size=(h, w), counts=tuple(int(c) for c in counts))


def rle_encode(mask: BinaryMask) -> MaskRLE:
    """Encode a mask as alternating background/foreground run counts.

    Canonical form: a leading 0 only when the first pixel (column-major) is
    foreground, and no zero-length runs anywhere else.
    """
    h, w = mask.data.shape
    flat = mask.data.flatten(order="F")
    if flat.size == 0:
        return MaskRLE(size=(h, w), counts=())
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return MaskRLE(size=(h, w), counts=tuple(int(r) for r in runs))


def rle_decode(rle: MaskRLE) -> BinaryMask:
    """Decode a run-length mask; rejects counts that do not sum to h*w."""
    h, w = rle.size
    if h < 1 or w < 1:
        raise ValueError(f"RLE size must be at least 1x1, got {rle.size}")
    total = sum(rle.counts)
    if total != h * w:
        raise ValueError(f"RLE counts sum to {total}, expected {h * w}")
    if any(c < 0 for c in rle.counts):
        raise ValueError("RLE counts must be nonnegative")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in rle.counts:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return BinaryMask(flat.reshape((h, w), order="F"))
