"""Synthetic sequences for desk-scale experiments.

Rectangular objects bounce inside disjoint horizontal lanes, so ground
truth never overlaps and identity is unambiguous. Detection noise models
cover box jitter, dropout, and one-sided 'tail' extensions (inconsistent
tail visibility is a classic source of box noise in rodent footage).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BBox, BinaryMask


@dataclass(frozen=True)
class SynthSpec:
    frames: int = 100
    num_objects: int = 2
    frame_w: int = 160
    frame_h: int = 120
    obj_w: int = 14
    obj_h: int = 10
    speed: int = 2
    seed: int = 0
    # detection noise
    score: float = 1.0
    jitter_px: int = 0
    dropout_rate: float = 0.0
    tail_px: int = 0
    tail_rate: float = 0.0

    def __post_init__(self):
        lane_h = self.frame_h // self.num_objects
        if lane_h <= self.obj_h + 2:
            raise ValueError("lanes too small for the object height")
        if self.obj_w + 2 >= self.frame_w:
            raise ValueError("frame too narrow for the object width")


@dataclass(frozen=True)
class SynthDetection:
    frame: int  # 0-based
    object_id: int
    bbox: BBox
    score: float


def gt_boxes(spec: SynthSpec) -> list[list[BBox]]:
    """Per-frame ground-truth boxes, one per object, constant size."""
    rng = np.random.default_rng(spec.seed)
    lane_h = spec.frame_h // spec.num_objects
    states = []
    for i in range(spec.num_objects):
        lane_top = i * lane_h
        x = int(rng.integers(1, spec.frame_w - spec.obj_w - 1))
        y = lane_top + int(rng.integers(1, lane_h - spec.obj_h - 1))
        vx = spec.speed if rng.random() < 0.5 else -spec.speed
        vy = 1 if rng.random() < 0.5 else -1
        states.append([x, y, vx, vy, lane_top, lane_top + lane_h])

    frames: list[list[BBox]] = []
    for _ in range(spec.frames):
        boxes = []
        for s in states:
            x, y, vx, vy, lane_top, lane_bottom = s
            boxes.append(BBox(x, y, x + spec.obj_w - 1, y + spec.obj_h - 1))
            nx, ny = x + vx, y + vy
            if nx < 0 or nx + spec.obj_w > spec.frame_w:
                vx = -vx
                nx = x + vx
            if ny < lane_top or ny + spec.obj_h > lane_bottom:
                vy = -vy
                ny = y + vy
            s[0], s[1], s[2], s[3] = nx, ny, vx, vy
        frames.append(boxes)
    return frames


def gt_masks(spec: SynthSpec) -> dict[int, list[BinaryMask]]:
    """Solid rectangular instance masks matching gt_boxes."""
    return {
        f: [BinaryMask.from_bbox(b, spec.frame_w, spec.frame_h) for b in boxes]
        for f, boxes in enumerate(gt_boxes(spec))
    }


def detections(spec: SynthSpec) -> list[SynthDetection]:
    """Noisy detections derived from the ground truth, ordered by frame
    then object id."""
    rng = np.random.default_rng(spec.seed + 1)
    out: list[SynthDetection] = []
    for f, boxes in enumerate(gt_boxes(spec)):
        for i, box in enumerate(boxes):
            if spec.dropout_rate and rng.random() < spec.dropout_rate:
                continue
            x_min, y_min, x_max, y_max = box.as_tuple()
            if spec.jitter_px:
                dx = int(rng.integers(-spec.jitter_px, spec.jitter_px + 1))
                dy = int(rng.integers(-spec.jitter_px, spec.jitter_px + 1))
                x_min, x_max = x_min + dx, x_max + dx
                y_min, y_max = y_min + dy, y_max + dy
            if spec.tail_px and rng.random() < spec.tail_rate:
                x_max += spec.tail_px
            x_min = max(0, x_min)
            y_min = max(0, y_min)
            x_max = min(spec.frame_w - 1, max(x_max, x_min))
            y_max = min(spec.frame_h - 1, max(y_max, y_min))
            out.append(
                SynthDetection(
                    frame=f, object_id=i, bbox=BBox(x_min, y_min, x_max, y_max),
                    score=spec.score,
                )
            )
    return out
