"""Masks, bounding boxes, IoU machinery, and mask <-> box conversions.

Boxes use corner-inclusive integer pixel coordinates: a box covers the
pixel centers (x_min..x_max, y_min..y_max), so width = x_max - x_min + 1.
Exporters that need half-open or normalized conventions convert at the
I/O boundary (see mot.py and the YOLO writer in engine.py).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyMaskError, MaskShapeError, RleError


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, corner-inclusive integer pixel coordinates."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"degenerate box {self}")
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"negative coordinates in {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    def clip(self, frame_w: int, frame_h: int) -> "BBox":
        return BBox(
            max(0, self.x_min),
            max(0, self.y_min),
            min(frame_w - 1, self.x_max),
            min(frame_h - 1, self.y_max),
        )

    def contains(self, other: "BBox") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and self.x_max >= other.x_max
            and self.y_max >= other.y_max
        )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


class BinaryMask:
    """Immutable per-frame pixel set, stored as a read-only bool array (h, w)."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.ascontiguousarray(np.asarray(pixels, dtype=bool))
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    def __setattr__(self, name, value):
        raise AttributeError("BinaryMask is immutable")

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def from_points(
        cls, points: Iterable[tuple[int, int]], width: int, height: int
    ) -> "BinaryMask":
        arr = np.zeros((height, width), dtype=bool)
        for x, y in points:
            arr[y, x] = True
        return cls(arr)

    @classmethod
    def from_bbox(cls, box: BBox, width: int, height: int) -> "BinaryMask":
        arr = np.zeros((height, width), dtype=bool)
        arr[box.y_min : box.y_max + 1, box.x_min : box.x_max + 1] = True
        return cls(arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def area(self) -> int:
        return int(self.pixels.sum())

    def coordinates(self) -> np.ndarray:
        """(n, 2) array of (x, y) coordinates of set pixels, row-major order."""
        ys, xs = np.nonzero(self.pixels)
        return np.stack([xs, ys], axis=1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __hash__(self):
        raise TypeError("BinaryMask is not hashable")

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, area={self.area})"


class MaskSource(str, enum.Enum):
    """Provenance of an instance mask; drives the validation-skip rule."""

    INITIAL = "initial"
    MANUAL = "manual"
    MODEL = "model"
    RECOVERY = "recovery"


@dataclass(frozen=True)
class InstanceMask:
    mask: BinaryMask
    instance_id: int
    frame_index: int
    source: MaskSource

    def __post_init__(self):
        if self.instance_id < 0:
            raise ValueError("instance_id must be non-negative")


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two corner-inclusive boxes."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Pixelwise IoU; two empty masks give 0 by convention."""
    if a.pixels.shape != b.pixels.shape:
        raise MaskShapeError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    inter = int(np.logical_and(a.pixels, b.pixels).sum())
    union = int(np.logical_or(a.pixels, b.pixels).sum())
    if union == 0:
        return 0.0
    return inter / union


def mask_area(m: BinaryMask) -> int:
    return m.area


def mask_to_bbox(m: BinaryMask) -> BBox:
    """Tight corner-inclusive box around the set pixels."""
    ys, xs = np.nonzero(m.pixels)
    if xs.size == 0:
        raise EmptyMaskError("cannot derive a bounding box from an empty mask")
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def inflate_bbox(
    b: BBox, margin_fraction: float, frame_w: int, frame_h: int
) -> BBox:
    """Extend each side by round(margin_fraction * side length), clipped to frame.

    Half values round up so a positive margin on a >=5 px side always grows
    the box.
    """
    if margin_fraction < 0:
        raise ValueError("margin_fraction must be >= 0")
    dx = int(margin_fraction * b.width + 0.5)
    dy = int(margin_fraction * b.height + 0.5)
    return BBox(
        max(0, b.x_min - dx),
        max(0, b.y_min - dy),
        min(frame_w - 1, b.x_max + dx),
        min(frame_h - 1, b.y_max + dy),
    )


def rle_encode(m: BinaryMask) -> list[int]:
    """Row-major run lengths, alternating zero-run/one-run, zero-run first.

    An all-zero mask encodes as [w*h]; an all-one mask as [0, w*h]. This
    layout is normative for the wire protocol and the session journal.
    """
    flat = m.pixels.ravel()
    n = flat.size
    if n == 0:
        return [0]
    changes = np.nonzero(np.diff(flat))[0] + 1
    boundaries = np.concatenate(([0], changes, [n]))
    runs = np.diff(boundaries).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs: Sequence[int], width: int, height: int) -> BinaryMask:
    """Inverse of rle_encode; validates the run sum against width*height."""
    total = sum(runs)
    if total != width * height:
        raise RleError(
            f"run sum {total} does not match {width}x{height}={width * height}"
        )
    if any(r < 0 for r in runs):
        raise RleError("negative run length")
    flat = np.zeros(width * height, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return BinaryMask(flat.reshape(height, width))
