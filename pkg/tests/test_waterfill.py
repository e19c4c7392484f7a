import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import isotonic_regression

from ehhelper.waterfill import (
    capped_head,
    capped_waterfill,
    fill_levels,
    forward_excluded,
    min_capped_waterfill,
    min_constrained_waterfill,
    staircase_levels,
)
from grid_oracle import causal, grid_maximize

energy = st.floats(0.0, 10.0, allow_nan=False)
budget_lists = st.lists(energy, min_size=1, max_size=12)


@st.composite
def rx_helper(draw, max_size=10):
    n = draw(st.integers(1, max_size))
    rx = draw(st.lists(energy, min_size=n, max_size=n))
    h = draw(st.lists(energy, min_size=n, max_size=n))
    alpha = draw(st.sampled_from([0.0, 0.3, 0.7, 1.0]))
    return np.array(rx), np.array(h), alpha


# -- staircase -------------------------------------------------------------

@pytest.mark.parametrize("budgets,expected", [([4, 2], [3, 3]), ([2, 4], [2, 4])])
def test_staircase_small_examples(budgets, expected):
    np.testing.assert_allclose(staircase_levels(budgets).per_slot, expected)


def test_staircase_three_slot_against_grid_search():
    b = [9.9, 8.7, 4.4]
    got = staircase_levels(b).per_slot
    np.testing.assert_allclose(got, [23 / 3] * 3, atol=1e-12)
    ref = grid_maximize(causal(b), [0] * 3, [sum(b)] * 3)
    np.testing.assert_allclose(got, ref, atol=2e-3)


def test_staircase_rejects_empty():
    with pytest.raises(ValueError, match="empty"):
        staircase_levels([])


def test_staircase_ties_go_to_smallest_end_index():
    # the running averages 2, 2, 2 tie; the first segment ends at slot 1
    s = staircase_levels([2, 2, 2])
    assert s.boundaries == (1, 2, 3)


@given(budget_lists)
def test_staircase_invariants(b):
    b = np.array(b)
    s = staircase_levels(b)
    x = s.per_slot
    tol = 1e-9 * (1 + b.sum())
    assert s.boundaries[-1] == b.size
    assert abs(x.sum() - b.sum()) <= tol                            # conservation
    assert np.all(np.cumsum(x) <= np.cumsum(b) + tol)               # causality
    assert np.all(np.diff(x) >= -tol)                               # non-decreasing
    starts = (0,) + s.boundaries[:-1]
    for lo, hi, lev in zip(starts, s.boundaries, s.segment_levels):
        np.testing.assert_allclose(x[lo:hi], lev)
    # wherever the level steps up the prefix constraint is tight
    for j in np.flatnonzero(np.diff(x) > tol):
        assert abs(np.cumsum(x)[j] - np.cumsum(b)[j]) <= tol


@given(budget_lists)
def test_staircase_matches_isotonic_regression(b):
    np.testing.assert_allclose(staircase_levels(b).per_slot, isotonic_regression(b).x, atol=1e-9)
    np.testing.assert_allclose(fill_levels(b), isotonic_regression(b).x, atol=1e-9)


# -- capped ----------------------------------------------------------------

def test_capped_example_against_grid_search():
    b, caps = [6.5, 13.5, 9], [7.5, 8, 7.5]
    got = capped_waterfill(b, caps).per_slot
    np.testing.assert_allclose(got, [6.5, 8, 7.5], atol=1e-12)
    np.testing.assert_allclose(got, grid_maximize(causal(b), [0] * 3, caps), atol=2e-3)


def test_capped_worked_example():
    np.testing.assert_allclose(capped_waterfill([6.5, 13.5, 9], [6.5, 8.25, 8.25]).per_slot,
                               [6.5, 8.25, 8.25], atol=1e-12)


def test_capped_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        capped_waterfill([1, 2], [1, 2, 3])


@given(budget_lists)
def test_infinite_caps_reduce_to_staircase(b):
    caps = np.full(len(b), np.inf)
    np.testing.assert_allclose(capped_waterfill(b, caps).per_slot, staircase_levels(b).per_slot, atol=1e-9)


@given(st.integers(1, 10).flatmap(lambda n: st.tuples(
    st.lists(energy, min_size=n, max_size=n), st.lists(st.floats(0, 12), min_size=n, max_size=n))))
def test_capped_invariants(args):
    b, caps = map(np.array, args)
    x = capped_waterfill(b, caps).per_slot
    tol = 1e-9 * (1 + b.sum())
    assert np.all(x <= caps + tol)
    assert np.all(x >= -tol)
    assert x.sum() <= b.sum() + tol
    assert np.all(np.cumsum(x) <= np.cumsum(b) + tol)
    assert capped_head(b, caps) == pytest.approx(x[0], rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 6), min_size=3, max_size=3), st.lists(st.floats(0, 6), min_size=3, max_size=3))
def test_capped_matches_grid_search(b, caps):
    ref = grid_maximize(causal(b), [0] * 3, caps)
    got = capped_waterfill(b, caps).per_slot
    # the utility is strictly concave, so maximisers agree up to the grid step
    np.testing.assert_allclose(got, ref, atol=5e-3)


# -- exclusion loop --------------------------------------------------------

def test_min_constrained_worked_example():
    levels, state = min_constrained_waterfill([5, 8, 3], [7, 1, 2], 0.7)
    np.testing.assert_allclose(levels, [7.5, 8, 7.5], atol=1e-12)
    assert state.excluded == {1}


def test_min_constrained_trivial_cases():
    levels, _ = min_constrained_waterfill([1, 4, 2], [5, 5, 5], 0.0)
    np.testing.assert_allclose(levels, [1, 4, 2])
    levels, _ = min_constrained_waterfill([2], [4], 0.5)
    np.testing.assert_allclose(levels, [4])


def test_min_capped_worked_example_against_grid_search():
    rx, h, a, caps = np.array([5, 8, 3.]), np.array([7, 1, 2.]), 0.7, [6.5, 13.5, 9]
    levels, _ = min_capped_waterfill(rx, h, a, caps)
    np.testing.assert_allclose(levels, [6.5, 8.25, 8.25], atol=1e-12)
    cum = np.cumsum(a * h)
    feas = lambda X: np.all(np.cumsum(X - rx, axis=1) <= cum + 1e-9, axis=1)
    np.testing.assert_allclose(levels, grid_maximize(feas, rx, caps), atol=2e-3)


@given(rx_helper())
def test_min_capped_trivial_caps(args):
    rx, h, a = args
    inf_levels, _ = min_capped_waterfill(rx, h, a, np.full(rx.size, np.inf))
    np.testing.assert_allclose(inf_levels, min_constrained_waterfill(rx, h, a)[0], atol=1e-9)
    floor_levels, _ = min_capped_waterfill(rx, h, a, rx)
    np.testing.assert_allclose(floor_levels, rx, atol=1e-9)


def test_min_capped_flags_cap_below_floor():
    _, state = min_capped_waterfill([5, 1], [0, 0], 0.5, [2, 9])
    assert state.infeasible_caps == {0}


def test_forwarding_chains_and_drops_suffix():
    h, dropped = forward_excluded([1, 2, 3, 4], [1, 3])
    np.testing.assert_allclose(h, [1, 0, 5, 0])
    assert dropped == 4
    h, dropped = forward_excluded([1, 2, 3], np.array([True, True, False]))
    np.testing.assert_allclose(h, [0, 0, 6])
    assert dropped == 0


@given(rx_helper())
def test_exclusion_loop_invariants(args):
    rx, h, a = args
    levels, state = min_constrained_waterfill(rx, h, a)
    tol = 1e-9 * (1 + np.sum(rx + a * h))
    assert np.all(levels >= rx - tol)                                      # floor
    for i in state.excluded:                                               # pinning
        assert levels[i] == pytest.approx(rx[i], abs=tol)
    assert state.iterations <= rx.size                                     # termination
    assert np.sum(state.effective_helper) + state.dropped_helper == pytest.approx(np.sum(h), abs=1e-9)
    # re-waterfilled levels never rise from one round to the next
    for (_, prev), (_, cur) in zip(state.rounds, state.rounds[1:]):
        both = ~np.isnan(prev) & ~np.isnan(cur)
        assert np.all(cur[both] <= prev[both] + tol)
    # receiver causality with the helper budget
    assert np.all(np.cumsum(levels - rx) <= a * np.cumsum(h) + tol)


@given(rx_helper())
def test_min_capped_invariants(args):
    rx, h, a = args
    caps = rx + np.linspace(0, 3, rx.size)
    levels, state = min_capped_waterfill(rx, h, a, caps)
    tol = 1e-9 * (1 + np.sum(rx + a * h))
    assert np.all(levels >= rx - tol)
    assert np.all(levels <= caps + tol)
    assert np.all(np.cumsum(levels - rx) <= a * np.cumsum(h) + tol)
    assert not state.infeasible_caps
