import itertools

import numpy as np
import pytest

from annoflow.assignment import solve_assignment


def brute_force_min(cost):
    """Exhaustive optimum over all matchings of min(R, C) pairs."""
    n_rows, n_cols = cost.shape
    best = None
    if n_rows <= n_cols:
        for perm in itertools.permutations(range(n_cols), n_rows):
            total = sum(cost[i, perm[i]] for i in range(n_rows))
            if best is None or total < best:
                best = total
    else:
        for rows in itertools.permutations(range(n_rows), n_cols):
            total = sum(cost[rows[j], j] for j in range(n_cols))
            if best is None or total < best:
                best = total
    return best


@pytest.mark.parametrize("shape", [(1, 1), (2, 2), (3, 3), (4, 4), (2, 4), (4, 2), (3, 5)])
def test_matches_brute_force(shape):
    rng = np.random.default_rng(hash(shape) % 2**32)
    for _ in range(30):
        cost = rng.random(shape)
        pairs = solve_assignment(cost)
        assert len(pairs) == min(shape)
        total = sum(cost[i, j] for i, j in pairs)
        assert total == pytest.approx(brute_force_min(cost), abs=1e-9)


def test_lexicographic_tie_break():
    # Both diagonals cost 1.0; the lexicographically smallest optimum is
    # (0,0),(1,1).
    cost = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert solve_assignment(cost) == [(0, 0), (1, 1)]

    # Row 0 must take column 1 to stay optimal, so no tie applies.
    cost = np.array([[0.9, 0.1], [0.1, 0.9]])
    assert solve_assignment(cost) == [(0, 1), (1, 0)]


def test_tie_break_prefers_low_column_per_row():
    cost = np.array([[0.2, 0.2, 0.9], [0.2, 0.2, 0.9], [0.9, 0.9, 0.2]])
    assert solve_assignment(cost) == [(0, 0), (1, 1), (2, 2)]


def test_empty():
    assert solve_assignment(np.zeros((0, 3))) == []
    assert solve_assignment(np.zeros((3, 0))) == []


def test_rows_exceed_columns_leaves_worst_row_out():
    cost = np.array([[0.1], [0.9], [0.5]])
    assert solve_assignment(cost) == [(0, 0)]
