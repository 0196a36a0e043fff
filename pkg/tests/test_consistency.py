import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from annoflow.consistency import (
    ConsistencyParams,
    FrameContext,
    SizeAnchor,
    VerdictOutcome,
    associate,
    check_overlap,
    check_size,
    validate,
)
from annoflow.errors import MaskShapeError
from annoflow.geometry import BinaryMask, InstanceMask, MaskSource, mask_iou


def inst(mask, instance_id, frame=0, source=MaskSource.MODEL):
    return InstanceMask(mask=mask, instance_id=instance_id, frame_index=frame, source=source)


def row_mask(x0, x1, row, w=40, h=40):
    """Horizontal run of pixels [x0, x1] on one row."""
    return BinaryMask.from_points([(x, row) for x in range(x0, x1 + 1)], w, h)


def test_associate_identity():
    masks = [
        inst(row_mask(0, 8, 2), 0),
        inst(row_mask(0, 8, 10), 1),
    ]
    got = associate(masks, masks)
    assert got.unmatched_prev == [] and got.unmatched_curr == []
    assert [(p, c) for p, c, _ in got.pairs] == [(0, 0), (1, 1)]
    assert all(iou == 1.0 for _, _, iou in got.pairs)


def test_associate_prefers_best_total():
    # prev0/curr0 overlap strongly, prev1/curr1 strongly; the cross pairs
    # weakly. Brute force over both permutations confirms the diagonal wins.
    prev = [inst(row_mask(0, 9, 2), 0), inst(row_mask(0, 9, 10), 1)]
    curr = [inst(row_mask(1, 10, 2), 0), inst(row_mask(2, 11, 10), 1)]
    iou = np.array(
        [[mask_iou(p.mask, c.mask) for c in curr] for p in prev]
    )
    totals = {
        perm: sum(iou[i, perm[i]] for i in range(2))
        for perm in itertools.permutations(range(2))
    }
    best = max(totals, key=totals.get)
    got = associate(prev, curr)
    assert [(p, c) for p, c, _ in got.pairs] == [(0, best[0]), (1, best[1])]


def test_associate_example_matrix_totals():
    # Cross IoUs {(0.8, 0.1), (0.2, 0.7)}: identity matching totals 1.5,
    # the swap only 0.3.
    from annoflow.assignment import solve_assignment

    iou = np.array([[0.8, 0.1], [0.2, 0.7]])
    pairs = solve_assignment(-iou)
    assert pairs == [(0, 0), (1, 1)]
    assert sum(iou[i, j] for i, j in pairs) == pytest.approx(1.5)


def test_associate_disjoint_goes_unmatched():
    prev = [inst(row_mask(0, 5, 2), 0)]
    curr = [inst(row_mask(20, 25, 30), 0)]
    got = associate(prev, curr)
    assert got.pairs == []
    assert got.unmatched_prev == [0]
    assert got.unmatched_curr == [0]


def test_associate_brute_force_optimum_small_sets():
    rng = np.random.default_rng(17)
    for trial in range(20):
        n = int(rng.integers(2, 6))
        prev, curr = [], []
        for i in range(n):
            row = 3 * i
            a0 = int(rng.integers(0, 10))
            prev.append(inst(row_mask(a0, a0 + int(rng.integers(3, 12)), row), i))
            b0 = int(rng.integers(0, 10))
            curr.append(inst(row_mask(b0, b0 + int(rng.integers(3, 12)), row), i))
        iou = np.array([[mask_iou(p.mask, c.mask) for c in curr] for p in prev])
        best = max(
            sum(iou[i, perm[i]] for i in range(n))
            for perm in itertools.permutations(range(n))
        )
        got = associate(prev, curr)
        total = sum(i for _, _, i in got.pairs)
        # unmatched pairs carry zero IoU, so totals still compare exactly
        assert total == pytest.approx(best, abs=1e-12)


def test_associate_dimension_mismatch():
    with pytest.raises(MaskShapeError):
        associate(
            [inst(row_mask(0, 3, 1, w=40), 0)],
            [inst(row_mask(0, 3, 1, w=41, h=40), 0)],
        )


def test_check_overlap_duplicates_fail():
    m = row_mask(0, 9, 5)
    verdict = check_overlap([(0, m), (1, m)], beta=0.9)
    assert verdict.outcome is VerdictOutcome.FAIL_OVERLAP
    assert verdict.pair == (0, 1)
    assert verdict.iou == 1.0


def test_check_overlap_disjoint_pass():
    assert check_overlap([(0, row_mask(0, 5, 1)), (1, row_mask(0, 5, 20))], 0.9).passed


def test_check_overlap_exactly_beta_passes():
    # IoU exactly 9/10 with beta 0.9: strict inequality means pass.
    a = row_mask(0, 9, 5)   # 10 px
    b = row_mask(0, 8, 5)   # 9 px subset
    assert mask_iou(a, b) == pytest.approx(0.9)
    assert check_overlap([(0, a), (1, b)], beta=0.9).passed
    # IoU 10/11 > 0.9 fails
    c = row_mask(0, 10, 5)  # 11 px superset
    assert check_overlap([(0, a), (1, c)], beta=0.9).outcome is VerdictOutcome.FAIL_OVERLAP


def test_check_size_boundaries():
    assert check_size(1000, 900, 0.1).passed
    assert not check_size(1000, 899, 0.1).passed
    assert check_size(1000, 1100, 0.1).passed
    assert not check_size(1000, 1101, 0.1).passed
    v = check_size(1000, 2000, 0.1, instance_id=3)
    assert v.outcome is VerdictOutcome.FAIL_SIZE
    assert v.instance_id == 3 and v.area == 2000


def test_check_size_zero_anchor_errors():
    with pytest.raises(ValueError):
        check_size(0, 10, 0.1)


@given(area=st.integers(1, 10_000), alpha=st.floats(0, 5, allow_nan=False))
def test_check_size_identity_always_passes(area, alpha):
    assert check_size(area, area, alpha).passed


def make_context(masks):
    return FrameContext(
        prev_masks={m.instance_id: m.mask for m in masks},
        anchor_areas={m.instance_id: m.mask.area for m in masks},
    )


def test_validate_identity_passes():
    frame = [inst(row_mask(0, 8, 2), 0), inst(row_mask(0, 8, 20), 1)]
    assert validate(make_context(frame), frame).passed


def test_validate_doubled_area_fails_size():
    prev = [inst(row_mask(0, 9, 2), 0), inst(row_mask(0, 9, 20), 1)]
    curr = [inst(row_mask(0, 19, 2), 0), inst(row_mask(0, 9, 20), 1)]
    verdict = validate(make_context(prev), curr)
    assert verdict.outcome is VerdictOutcome.FAIL_SIZE
    assert verdict.instance_id == 0
    lo, hi = verdict.allowed
    assert lo == pytest.approx(9.0) and hi == pytest.approx(11.0)


def block(x0, y0, w, h, fw=40, fh=40):
    return BinaryMask.from_points(
        [(x, y) for x in range(x0, x0 + w) for y in range(y0, y0 + h)], fw, fh
    )


def test_validate_near_duplicates_fail_overlap():
    # curr instance 1 drifts onto instance 0: both still associate with
    # their previous masks, but the two current masks overlap beyond beta.
    prev0 = block(0, 0, 20, 10)
    prev1 = block(0, 5, 20, 10)
    curr0 = prev0
    curr1 = block(1, 0, 20, 10)  # one-column shift of curr0: IoU 190/210
    assert mask_iou(curr0, curr1) > 0.9
    assert mask_iou(prev1, curr1) > 0.0
    prev = [inst(prev0, 0), inst(prev1, 1)]
    curr = [inst(curr0, 0), inst(curr1, 1)]
    verdict = validate(make_context(prev), curr)
    assert verdict.outcome is VerdictOutcome.FAIL_OVERLAP
    assert verdict.pair == (0, 1)


def test_validate_unmatched_instance_fails_association():
    prev = [inst(row_mask(0, 8, 2), 0), inst(row_mask(0, 8, 20), 1)]
    curr = [inst(row_mask(0, 8, 2), 0), inst(row_mask(20, 28, 35), 1)]
    verdict = validate(make_context(prev), curr)
    assert verdict.outcome is VerdictOutcome.FAIL_ASSOCIATION
    assert 1 in verdict.unmatched_ids


def test_validate_empty_mask_fails_association():
    prev = [inst(row_mask(0, 8, 2), 0)]
    curr = [inst(BinaryMask.zeros(40, 40), 0)]
    verdict = validate(make_context(prev), curr)
    assert verdict.outcome is VerdictOutcome.FAIL_ASSOCIATION


def test_validate_order_independent():
    prev = [inst(row_mask(0, 8, 2), 0), inst(row_mask(0, 8, 20), 1)]
    curr = [inst(row_mask(1, 9, 2), 0), inst(row_mask(1, 9, 20), 1)]
    ctx = make_context(prev)
    v1 = validate(ctx, curr)
    v2 = validate(ctx, list(reversed(curr)))
    assert v1 == v2


def test_params_validation():
    with pytest.raises(ValueError):
        ConsistencyParams(alpha=-0.1)
    with pytest.raises(ValueError):
        ConsistencyParams(beta=0.0)
    assert ConsistencyParams().size_anchor is SizeAnchor.LAST_MANUAL
