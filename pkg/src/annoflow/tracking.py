"""IoU tracker and identity-F1 scoring for exported labels.

The tracker follows the two-stage BYTE association scheme: high-confidence
detections match active and lost tracks first, low-confidence ones then
rescue remaining active tracks. Association cost is 1 - IoU against each
track's last box; there is no motion model, which keeps the harness exactly
reproducible. IDF1 uses the global identity matching over whole
trajectories, not per-frame greedy matching.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assignment import solve_assignment
from .geometry import BBox, bbox_iou
from .mot import MotRecord, read_mot
from .synth import SynthSpec, detections as synth_detections, gt_boxes


@dataclass(frozen=True)
class Detection:
    frame: int  # 1-based, matching the MOT convention
    bbox: BBox
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")


@dataclass(frozen=True)
class TrackerParams:
    track_high_thresh: float = 0.5
    track_low_thresh: float = 0.1
    match_thresh: float = 0.9  # cost ceiling: reject when 1 - IoU > this
    new_track_thresh: float = 0.9
    track_buffer: int = 120

    def __post_init__(self):
        if self.track_low_thresh > self.track_high_thresh:
            raise ValueError("track_low_thresh must be <= track_high_thresh")
        for name in ("track_high_thresh", "track_low_thresh", "match_thresh", "new_track_thresh"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


class TrackState(str, enum.Enum):
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


@dataclass
class Track:
    track_id: int
    boxes: dict[int, BBox] = field(default_factory=dict)  # frame -> box
    state: TrackState = TrackState.ACTIVE
    last_frame: int = 0

    @property
    def last_box(self) -> BBox:
        return self.boxes[self.last_frame]

    def add(self, frame: int, box: BBox) -> None:
        if self.boxes and frame <= self.last_frame:
            raise ValueError("track frames must be strictly increasing")
        self.boxes[frame] = box
        self.last_frame = frame
        self.state = TrackState.ACTIVE


def _match(
    tracks: list[Track], dets: list[Detection], cost_ceiling: float
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Assign detections to tracks on cost = 1 - IoU; pairs above the
    ceiling are rejected. Assignment ties resolve to the lower det index."""
    if not tracks or not dets:
        return [], list(range(len(tracks))), list(range(len(dets)))
    cost = np.array(
        [[1.0 - bbox_iou(t.last_box, d.bbox) for d in dets] for t in tracks]
    )
    pairs = [
        (ti, di) for ti, di in solve_assignment(cost) if cost[ti, di] <= cost_ceiling
    ]
    used_t = {ti for ti, _ in pairs}
    used_d = {di for _, di in pairs}
    return (
        pairs,
        [i for i in range(len(tracks)) if i not in used_t],
        [i for i in range(len(dets)) if i not in used_d],
    )


def byte_track(
    detections: list[Detection], params: TrackerParams | None = None
) -> list[Track]:
    """Track a detection stream. Detections are grouped by frame and frames
    must arrive in non-decreasing order; out-of-order input is an error."""
    params = params or TrackerParams()
    by_frame: dict[int, list[Detection]] = {}
    last_seen = None
    for det in detections:
        if last_seen is not None and det.frame < last_seen:
            raise ValueError(
                f"detections out of order: frame {det.frame} after {last_seen}"
            )
        last_seen = det.frame
        by_frame.setdefault(det.frame, []).append(det)

    tracks: list[Track] = []
    next_id = 1
    for frame in sorted(by_frame):
        dets = by_frame[frame]
        high = [d for d in dets if d.score >= params.track_high_thresh]
        low = [
            d
            for d in dets
            if params.track_low_thresh <= d.score < params.track_high_thresh
        ]

        # retire tracks that stayed lost past the buffer before they can
        # be matched again
        for track in tracks:
            if (
                track.state is not TrackState.REMOVED
                and frame - track.last_frame > params.track_buffer
            ):
                track.state = TrackState.REMOVED

        # stage 1: active + lost tracks vs high-score detections
        candidates = [t for t in tracks if t.state is not TrackState.REMOVED]
        pairs, unmatched_t, unmatched_d = _match(candidates, high, params.match_thresh)
        for ti, di in pairs:
            candidates[ti].add(frame, high[di].bbox)

        # stage 2: remaining *active* tracks vs low-score detections
        remaining_active = [
            candidates[i] for i in unmatched_t if candidates[i].state is TrackState.ACTIVE
        ]
        pairs2, _, _ = _match(remaining_active, low, params.match_thresh)
        matched_stage2 = set()
        for ti, di in pairs2:
            remaining_active[ti].add(frame, low[di].bbox)
            matched_stage2.add(id(remaining_active[ti]))

        # unmatched tracks drift to lost
        for i in unmatched_t:
            track = candidates[i]
            if id(track) in matched_stage2:
                continue
            track.state = TrackState.LOST

        # unmatched high-score detections may found new tracks
        for di in unmatched_d:
            det = high[di]
            if det.score >= params.new_track_thresh:
                track = Track(track_id=next_id)
                track.add(frame, det.bbox)
                tracks.append(track)
                next_id += 1

    return tracks


@dataclass(frozen=True)
class Idf1Report:
    idf1: float
    idtp: int
    idfp: int
    idfn: int
    matching: list[tuple[int, int, int]]  # (gt_id, pred_id, overlap frames)
    per_gt_id: dict[int, dict[str, int]] = field(default_factory=dict)
    per_pred_id: dict[int, dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "idf1": self.idf1,
            "idtp": self.idtp,
            "idfp": self.idfp,
            "idfn": self.idfn,
            "matching": [
                {"gt_id": g, "pred_id": p, "frames": f} for g, p, f in self.matching
            ],
            "per_gt_id": {str(k): v for k, v in sorted(self.per_gt_id.items())},
            "per_pred_id": {str(k): v for k, v in sorted(self.per_pred_id.items())},
        }


def idf1(
    gt: list[Track], pred: list[Track], iou_gate: float = 0.5
) -> Idf1Report:
    """Identity F1 under the optimal global identity matching.

    For every (gt, pred) identity pair we count frames where both boxes
    exist and overlap with IoU >= iou_gate; the assignment maximizing the
    total matched frames defines IDTP. Empty vs empty scores 1 by
    convention (vacuous perfection)."""
    total_gt = sum(len(t.boxes) for t in gt)
    total_pred = sum(len(t.boxes) for t in pred)
    if total_gt == 0 and total_pred == 0:
        return Idf1Report(idf1=1.0, idtp=0, idfp=0, idfn=0, matching=[])
    if not gt or not pred:
        return Idf1Report(
            idf1=0.0,
            idtp=0,
            idfp=total_pred,
            idfn=total_gt,
            matching=[],
            per_gt_id={t.track_id: {"idtp": 0, "idfn": len(t.boxes)} for t in gt},
            per_pred_id={t.track_id: {"idtp": 0, "idfp": len(t.boxes)} for t in pred},
        )

    overlap = np.zeros((len(gt), len(pred)), dtype=float)
    for i, g in enumerate(gt):
        for j, p in enumerate(pred):
            count = 0
            for frame, gbox in g.boxes.items():
                pbox = p.boxes.get(frame)
                if pbox is not None and bbox_iou(gbox, pbox) >= iou_gate:
                    count += 1
            overlap[i, j] = count

    pairs = solve_assignment(-overlap)
    matching = [
        (gt[i].track_id, pred[j].track_id, int(overlap[i, j]))
        for i, j in pairs
        if overlap[i, j] > 0
    ]
    idtp = int(sum(f for _, _, f in matching))
    idfp = total_pred - idtp
    idfn = total_gt - idtp
    score = 2.0 * idtp / (2.0 * idtp + idfp + idfn)
    matched_gt = {g: f for g, _, f in matching}
    matched_pred = {p: f for _, p, f in matching}
    per_gt = {
        t.track_id: {
            "idtp": matched_gt.get(t.track_id, 0),
            "idfn": len(t.boxes) - matched_gt.get(t.track_id, 0),
        }
        for t in gt
    }
    per_pred = {
        t.track_id: {
            "idtp": matched_pred.get(t.track_id, 0),
            "idfp": len(t.boxes) - matched_pred.get(t.track_id, 0),
        }
        for t in pred
    }
    return Idf1Report(
        idf1=score,
        idtp=idtp,
        idfp=idfp,
        idfn=idfn,
        matching=matching,
        per_gt_id=per_gt,
        per_pred_id=per_pred,
    )


# --- adapters ---------------------------------------------------------------

def records_to_tracks(records: list[MotRecord]) -> list[Track]:
    table: dict[int, Track] = {}
    for rec in sorted(records, key=lambda r: (r.track_id, r.frame)):
        track = table.setdefault(rec.track_id, Track(track_id=rec.track_id))
        track.add(rec.frame, rec.bbox)
    return [table[k] for k in sorted(table)]


def records_to_detections(records: list[MotRecord]) -> list[Detection]:
    return [
        Detection(frame=r.frame, bbox=r.bbox, score=min(1.0, max(0.0, r.score)))
        for r in sorted(records, key=lambda r: (r.frame, r.track_id))
    ]


def load_mot_tracks(path: str | Path) -> list[Track]:
    return records_to_tracks(read_mot(path))


def load_mot_detections(path: str | Path) -> list[Detection]:
    return records_to_detections(read_mot(path))


def synth_sequence(spec: SynthSpec) -> tuple[list[Track], list[Detection]]:
    """Ground-truth tracks plus noisy detections for a synthetic scene
    (frames 1-based to match the MOT convention)."""
    tracks = []
    for i in range(spec.num_objects):
        track = Track(track_id=i + 1)
        for f, boxes in enumerate(gt_boxes(spec)):
            track.add(f + 1, boxes[i])
        tracks.append(track)
    dets = [
        Detection(frame=d.frame + 1, bbox=d.bbox, score=d.score)
        for d in synth_detections(spec)
    ]
    return tracks, dets
