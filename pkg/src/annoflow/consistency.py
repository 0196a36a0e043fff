"""Frame-to-frame quality validation.

A frame passes when (1) every instance associates to a previous-frame mask
by IoU, (2) no two masks in the frame overlap beyond beta, and (3) each
mask's area stays within alpha of its anchor area. Failures are reported
in that order with enough detail for the conflict UI.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .assignment import solve_assignment
from .errors import MaskShapeError
from .geometry import BinaryMask, InstanceMask, MaskSource, mask_iou


class SizeAnchor(str, enum.Enum):
    """What the size condition compares against."""

    LAST_MANUAL = "last_manual"
    PREVIOUS_FRAME = "previous_frame"


@dataclass(frozen=True)
class ConsistencyParams:
    alpha: float = 0.1
    beta: float = 0.9
    min_match_iou: float = 0.0
    size_anchor: SizeAnchor = SizeAnchor.LAST_MANUAL

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must be in (0, 1]")


@dataclass(frozen=True)
class Association:
    """One-to-one matching between previous and current instance ids."""

    pairs: list[tuple[int, int, float]]  # (prev_id, curr_id, iou)
    unmatched_prev: list[int]
    unmatched_curr: list[int]


class VerdictOutcome(str, enum.Enum):
    PASS = "pass"
    FAIL_ASSOCIATION = "fail_association"
    FAIL_SIZE = "fail_size"
    FAIL_OVERLAP = "fail_overlap"


@dataclass(frozen=True)
class Verdict:
    outcome: VerdictOutcome
    # fail_association
    unmatched_ids: tuple[int, ...] = ()
    # fail_size
    instance_id: int | None = None
    area: int | None = None
    allowed: tuple[float, float] | None = None
    # fail_overlap
    pair: tuple[int, int] | None = None
    iou: float | None = None

    @property
    def passed(self) -> bool:
        return self.outcome is VerdictOutcome.PASS

    def to_dict(self) -> dict:
        out: dict = {"outcome": self.outcome.value}
        if self.outcome is VerdictOutcome.FAIL_ASSOCIATION:
            out["unmatched_ids"] = list(self.unmatched_ids)
        elif self.outcome is VerdictOutcome.FAIL_SIZE:
            out["instance_id"] = self.instance_id
            out["area"] = self.area
            out["allowed"] = list(self.allowed)
        elif self.outcome is VerdictOutcome.FAIL_OVERLAP:
            out["pair"] = list(self.pair)
            out["iou"] = self.iou
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Verdict":
        outcome = VerdictOutcome(data["outcome"])
        if outcome is VerdictOutcome.FAIL_ASSOCIATION:
            return cls(outcome, unmatched_ids=tuple(data["unmatched_ids"]))
        if outcome is VerdictOutcome.FAIL_SIZE:
            return cls(
                outcome,
                instance_id=data["instance_id"],
                area=data["area"],
                allowed=tuple(data["allowed"]),
            )
        if outcome is VerdictOutcome.FAIL_OVERLAP:
            return cls(outcome, pair=tuple(data["pair"]), iou=data["iou"])
        return cls(outcome)


PASS = Verdict(VerdictOutcome.PASS)


@dataclass(frozen=True)
class FrameContext:
    """Previous-frame masks plus the per-instance anchor areas for the size
    condition (last manual/initial area, or previous-frame area)."""

    prev_masks: dict[int, BinaryMask] = field(default_factory=dict)
    anchor_areas: dict[int, int] = field(default_factory=dict)


def associate(
    prev: list[InstanceMask],
    curr: list[InstanceMask],
    params: ConsistencyParams | None = None,
) -> Association:
    """Optimal one-to-one matching maximizing total IoU.

    Pairs at or below min_match_iou count as unmatched. Ties between equal
    totals resolve to the lowest (prev_id, curr_id) combination.
    """
    params = params or ConsistencyParams()
    all_masks = list(prev) + list(curr)
    if all_masks:
        w, h = all_masks[0].mask.width, all_masks[0].mask.height
        for m in all_masks:
            if m.mask.width != w or m.mask.height != h:
                raise MaskShapeError("all masks must share frame dimensions")

    prev_sorted = sorted(prev, key=lambda m: m.instance_id)
    curr_sorted = sorted(curr, key=lambda m: m.instance_id)
    if not prev_sorted or not curr_sorted:
        return Association(
            pairs=[],
            unmatched_prev=[m.instance_id for m in prev_sorted],
            unmatched_curr=[m.instance_id for m in curr_sorted],
        )

    iou = np.zeros((len(prev_sorted), len(curr_sorted)))
    for i, p in enumerate(prev_sorted):
        for j, c in enumerate(curr_sorted):
            iou[i, j] = mask_iou(p.mask, c.mask)

    matched = solve_assignment(-iou)
    pairs = []
    used_prev, used_curr = set(), set()
    for i, j in matched:
        if iou[i, j] > params.min_match_iou:
            pairs.append(
                (prev_sorted[i].instance_id, curr_sorted[j].instance_id, float(iou[i, j]))
            )
            used_prev.add(i)
            used_curr.add(j)
    return Association(
        pairs=pairs,
        unmatched_prev=[
            m.instance_id for i, m in enumerate(prev_sorted) if i not in used_prev
        ],
        unmatched_curr=[
            m.instance_id for j, m in enumerate(curr_sorted) if j not in used_curr
        ],
    )


def check_overlap(
    masks: list[tuple[int, BinaryMask]], beta: float
) -> Verdict:
    """Fails iff some unordered pair of same-frame masks has IoU strictly
    above beta (duplicate-mask detector). Pairs scan in ascending id order."""
    items = sorted(masks, key=lambda t: t[0])
    for a in range(len(items)):
        for b in range(a + 1, len(items)):
            value = mask_iou(items[a][1], items[b][1])
            if value > beta:
                return Verdict(
                    VerdictOutcome.FAIL_OVERLAP,
                    pair=(items[a][0], items[b][0]),
                    iou=value,
                )
    return PASS


def check_size(
    anchor_area: int, curr_area: int, alpha: float, instance_id: int = 0
) -> Verdict:
    """Fails iff curr_area falls outside the closed interval
    [(1-alpha)*anchor, (1+alpha)*anchor]."""
    if anchor_area <= 0:
        raise ValueError("anchor area must be positive")
    lo = (1.0 - alpha) * anchor_area
    hi = (1.0 + alpha) * anchor_area
    if lo <= curr_area <= hi:
        return PASS
    return Verdict(
        VerdictOutcome.FAIL_SIZE,
        instance_id=instance_id,
        area=curr_area,
        allowed=(lo, hi),
    )


def validate(
    context: FrameContext,
    curr_masks: list[InstanceMask],
    params: ConsistencyParams | None = None,
) -> Verdict:
    """Association, then per-instance size, then in-frame overlap; the first
    failure is reported. Instances with no positive-IoU partner (including
    empty masks) fail association."""
    params = params or ConsistencyParams()
    prev = [
        InstanceMask(mask=m, instance_id=i, frame_index=-1, source=MaskSource.MODEL)
        for i, m in sorted(context.prev_masks.items())
    ]
    assoc = associate(prev, curr_masks, params)
    if assoc.unmatched_prev or assoc.unmatched_curr:
        unmatched = tuple(sorted(set(assoc.unmatched_prev) | set(assoc.unmatched_curr)))
        return Verdict(VerdictOutcome.FAIL_ASSOCIATION, unmatched_ids=unmatched)

    for m in sorted(curr_masks, key=lambda m: m.instance_id):
        anchor = context.anchor_areas.get(m.instance_id)
        if anchor is None:
            return Verdict(
                VerdictOutcome.FAIL_ASSOCIATION, unmatched_ids=(m.instance_id,)
            )
        verdict = check_size(anchor, m.mask.area, params.alpha, m.instance_id)
        if not verdict.passed:
            return verdict

    return check_overlap(
        [(m.instance_id, m.mask) for m in curr_masks], params.beta
    )
