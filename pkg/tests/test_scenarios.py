import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehhelper import EnergyTrace, TraceError, ScenarioKind, solve, solve_s1, solve_s2, solve_s3, solve_s4
from ehhelper.scenarios import InfeasibleTransferError, transfer_schedule
from conftest import ALPHAS, random_trace

# three-slot trace on which the greedy slot-by-slot passes are suboptimal:
# the first slot should run at p=4.688 but the passes choose 4.144
GREEDY_GAP = dict(
    tx=[7.8979907083362715, 0.3900240096696683, 8.3730392111191, 9.90267387662714],
    rx=[5.591622180983393, 3.600112757256746, 2.33935797646636, 1.8295100473860026],
    h=[3.233357272063835, 8.516571736460257, 0.03255666372189325, 7.859786004414072],
    alpha=0.3,
)


@st.composite
def traces(draw, max_n=8):
    n = draw(st.integers(1, max_n))
    lists = [draw(st.lists(st.floats(0, 10), min_size=n, max_size=n)) for _ in range(3)]
    return EnergyTrace.from_lists(*lists, draw(st.sampled_from(ALPHAS)))


# -- worked example --------------------------------------------------------

def test_s2_worked_example(example_trace, cost):
    sol = solve_s2(example_trace.rx_energy, example_trace.helper_energy, 0.7, cost)
    np.testing.assert_allclose(sol.policy.rx_consumption, [7.5, 8, 7.5], atol=1e-9)
    np.testing.assert_allclose(sol.policy.helper_transfer, [2.5 / 0.7, 0, 4.5 / 0.7], atol=1e-9)
    assert sol.policy.helper_transfer[1] == 0.0


def test_s3_worked_example(example_trace, cost):
    sol = solve_s3(example_trace, cost)
    np.testing.assert_allclose(sol.policy.tx_power, [6.5, 8.25, 8.25], atol=1e-9)
    first = sol.passes[0]
    assert first.saved_rx == pytest.approx(1.0, abs=1e-12)
    assert first.saved_helper == pytest.approx(1 / 0.7, abs=1e-12)
    np.testing.assert_allclose(first.rx_level, 7.5)


def test_s4_worked_example(example_trace, cost):
    np.testing.assert_allclose(solve_s4(example_trace, cost).policy.tx_power, [6.5, 8.25, 8.25], atol=1e-9)


def test_s1_worked_example(example_trace, cost):
    sol = solve_s1(example_trace, cost)
    # the transmitter binds in slot 1 and then equalises over slots 2-3
    np.testing.assert_allclose(sol.policy.tx_power, [6.5, 8.25, 8.25], atol=1e-9)
    np.testing.assert_allclose(sol.policy.helper_transfer, example_trace.helper_energy)


def test_dispatch_by_name(example_trace, cost):
    for kind in ("s1", "S2", ScenarioKind.S3_battery_tx_nobatt_rx, "s4_no_batteries"):
        assert solve(kind, example_trace, cost).objective > 0
    with pytest.raises(ValueError):
        ScenarioKind.parse("s5")


def test_invalid_trace_rejected(cost):
    with pytest.raises(TraceError):
        solve_s1(EnergyTrace.from_lists([1], [1], [1], 2.0), cost)


# -- transfer schedule -----------------------------------------------------

def test_transfer_schedule_values():
    d = transfer_schedule([7.5, 8, 7.5], [5, 8, 3], [7, 1, 2], 0.7)
    np.testing.assert_allclose(d, [2.5 / 0.7, 0, 4.5 / 0.7])


def test_transfer_schedule_raises_on_real_deficit():
    with pytest.raises(InfeasibleTransferError) as exc:
        transfer_schedule([10, 8, 3], [5, 8, 3], [7, 1, 2], 0.7)
    assert exc.value.prefix == 1
    with pytest.raises(InfeasibleTransferError):
        transfer_schedule([6, 8], [5, 8], [7, 1], 0.0)


def test_transfer_schedule_repairs_round_off():
    d = transfer_schedule([2 + 1e-12, 1], [1, 1], [1, 1], 1.0)
    assert np.all(np.cumsum(d) <= np.cumsum([1, 1]) + 1e-15)


# -- closed forms and orderings --------------------------------------------

def test_s4_without_helper_is_slotwise(cost):
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        t = EnergyTrace.from_lists(rng.uniform(0, 10, n), rng.uniform(0, 10, n), np.zeros(n), 0.7)
        want = np.minimum(cost.rate_fn(t.tx_energy), cost.decode_inv(t.rx_energy))
        np.testing.assert_allclose(solve_s4(t, cost).policy.rate, want, atol=1e-12)


def test_s3_with_unlimited_transmitter_equals_s2(cost):
    rng = np.random.default_rng(12)
    for _ in range(50):
        t = random_trace(rng)
        big = EnergyTrace.from_lists(np.full(t.n_slots, 1e6), t.rx_energy, t.helper_energy, t.alpha)
        s2 = solve_s2(t.rx_energy, t.helper_energy, t.alpha, cost).objective
        assert solve_s3(big, cost).objective == pytest.approx(s2, abs=1e-6)


@settings(max_examples=150, deadline=None)
@given(traces())
def test_scenario_ordering(cost, trace):
    s1, s3, s4 = (solve(k, trace, cost).objective for k in ("s1", "s3", "s4"))
    assert s1 >= s3 - 1e-6
    assert s3 >= s4 - 1e-6


@settings(max_examples=150, deadline=None)
@given(traces())
def test_policies_are_feasible_and_consistent(cost, trace):
    from ehhelper.oracle import check_feasible, constraint_system
    for kind in ScenarioKind:
        sol = solve(kind, trace, cost)
        assert sol.policy.is_finite_nonnegative(tol=1e-9)
        assert sol.objective == pytest.approx(np.sum(sol.policy.rate), abs=1e-9)
        report = check_feasible(sol.policy, constraint_system(kind, trace, cost))
        assert report.feasible, (kind, report.min_slack)


@settings(max_examples=150, deadline=None)
@given(traces())
def test_s1_rates_non_decreasing(cost, trace):
    r = solve_s1(trace, cost).policy.rate
    assert np.all(np.diff(r) >= -1e-9)


@settings(max_examples=150, deadline=None)
@given(traces())
def test_s2_lower_slot_before_a_higher_one_sits_on_floor(cost, trace):
    q = solve_s2(trace.rx_energy, trace.helper_energy, trace.alpha, cost).policy.rx_consumption
    for m in range(q.size):
        if np.any(q[m + 1:] < q[m] - 1e-9):
            assert q[m] == pytest.approx(trace.rx_energy[m], abs=1e-9)


# -- greedy passes vs refinement -------------------------------------------

def test_greedy_passes_fall_short_on_known_trace(cost):
    t = EnergyTrace.from_lists(GREEDY_GAP["tx"], GREEDY_GAP["rx"], GREEDY_GAP["h"], GREEDY_GAP["alpha"])
    greedy = solve_s3(t, cost, refine=False)
    refined = solve_s3(t, cost)
    assert greedy.objective == pytest.approx(4.888668, abs=1e-6)
    assert refined.objective == pytest.approx(4.947126, abs=1e-6)
    assert any("interior-point" in d for d in refined.diagnostics)
    np.testing.assert_allclose(refined.policy.tx_power, [4.688, 3.600, 5.031, 5.031], atol=2e-3)


def test_refinement_skipped_when_greedy_meets_bound(example_trace, cost):
    sol = solve_s3(example_trace, cost)
    assert not any("interior-point" in d for d in sol.diagnostics)


def test_zero_alpha_s3_uses_own_harvest(cost):
    t = EnergyTrace.from_lists([4, 4], [1, 9], [5, 5], 0.0)
    sol = solve_s3(t, cost)
    np.testing.assert_allclose(sol.policy.helper_transfer, 0.0)
    assert sol.policy.rate[0] == pytest.approx(cost.decode_inv(1.0))
