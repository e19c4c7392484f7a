"""End-to-end solvers for the four battery configurations.

``S1``: transmitter and receiver both have batteries.
``S2``: full-power transmitter, battery-less receiver.
``S3``: transmitter with battery, battery-less receiver.
``S4``: neither transmitter nor receiver has a battery.

In every scenario the helper can store energy and forwards it to the
receiver with efficiency ``alpha``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ehhelper.interior import optimal_helper_delivery
from ehhelper.model import CostModel, EnergyTrace, Policy, require_valid
from ehhelper.waterfill import (
    REL_TOL,
    ExclusionState,
    SegmentSchedule,
    capped_head,
    capped_waterfill,
    min_capped_waterfill,
    min_constrained_waterfill,
    receiver_levels,
)


class ScenarioKind(str, enum.Enum):
    S1_both_batteries = "s1"
    S2_fullpower_tx_nobatt_rx = "s2"
    S3_battery_tx_nobatt_rx = "s3"
    S4_no_batteries = "s4"

    @classmethod
    def parse(cls, value) -> "ScenarioKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        for kind in cls:
            if key in (kind.value, kind.name.lower()):
                return kind
        raise ValueError(f"unknown scenario {value!r}")


class InfeasibleTransferError(ValueError):
    """A requested receiver consumption needs more helper energy than harvested."""

    def __init__(self, prefix: int, demand: float, available: float):
        self.prefix = prefix
        self.demand = demand
        self.available = available
        super().__init__(
            f"helper causality violated at prefix j={prefix}: "
            f"cumulative transfer {demand:.9g} exceeds harvested {available:.9g}"
        )


@dataclass(frozen=True)
class TransferPass:
    """One outer pass of the battery-transmitter solver (0-based ``k``).

    ``saved_rx`` is in receiver-energy units; ``saved_helper`` is the same
    amount in helper units (``saved_rx / alpha``).
    """

    k: int
    rx_level: float
    rx_rate_cap: float
    rate: float
    saved_rx: float
    saved_helper: float


@dataclass(frozen=True)
class Solution:
    scenario: ScenarioKind
    policy: Policy
    objective: float
    segments: SegmentSchedule | None = None
    diagnostics: tuple[str, ...] = ()
    rx_levels: np.ndarray | None = None
    exclusion: ExclusionState | None = None
    passes: tuple[TransferPass, ...] = field(default=(), repr=False)


def _policy_from_rates(rate, cost: CostModel, rx_consumption, helper_transfer) -> Policy:
    rate = np.maximum(np.asarray(rate, dtype=float), 0.0)
    return Policy(
        tx_power=np.maximum(cost.rate_inv(rate), 0.0),
        rate=rate,
        rx_consumption=rx_consumption,
        helper_transfer=helper_transfer,
    )


def transfer_schedule(q, rx_energy, helper_energy, alpha: float, tol: float = 1e-9) -> np.ndarray:
    """Helper transfers delivering ``max(q - rx_energy, 0)`` at each slot.

    Prefix deficits up to ``tol`` (round-off) are repaired by deferring the
    excess to the next slot; larger deficits raise
    :class:`InfeasibleTransferError` naming the first violating 1-based prefix.
    """
    q = np.asarray(q, dtype=float)
    rx = np.asarray(rx_energy, dtype=float)
    h = np.asarray(helper_energy, dtype=float)
    need = np.maximum(q - rx, 0.0)
    if alpha == 0.0:
        if np.any(need > tol):
            j = int(np.flatnonzero(need > tol)[0])
            raise InfeasibleTransferError(j + 1, float("inf"), 0.0)
        return np.zeros_like(q)
    delta = need / alpha
    avail = np.cumsum(h)
    out = np.empty_like(delta)
    sent = 0.0
    owed = 0.0
    for j in range(delta.size):
        want = delta[j] + owed
        room = avail[j] - sent
        if want > room + tol * (1.0 + avail[j]):
            raise InfeasibleTransferError(j + 1, sent + want, float(avail[j]))
        out[j] = min(want, max(room, 0.0))
        owed = want - out[j]
        sent += out[j]
    return out


def solve_s1(trace: EnergyTrace, cost: CostModel) -> Solution:
    """Both nodes have batteries: immediate helper transfer + staircase rates.

    Each segment's rate is the smaller of the rate the transmitter can sustain
    and the rate the receiver (with all helper energy forwarded at once) can
    decode, averaged over the window; the segment ends at the window with the
    smallest such rate.
    """
    require_valid(trace)
    n = trace.n_slots
    cum_tx = np.cumsum(trace.tx_energy)
    cum_rx = np.cumsum(trace.virtual_rx_energy)
    rates = np.empty(n)
    bounds, levels = [], []
    start, used_tx, used_rx = 0, 0.0, 0.0
    while start < n:
        width = np.arange(1, n - start + 1, dtype=float)
        avg_tx = np.maximum(cum_tx[start:] - used_tx, 0.0) / width
        avg_rx = np.maximum(cum_rx[start:] - used_rx, 0.0) / width
        cand = np.minimum(cost.rate_fn(avg_tx), cost.decode_inv(avg_rx))
        best = float(np.min(cand))
        end = start + int(np.flatnonzero(cand <= best + REL_TOL * (1.0 + best))[0]) + 1
        rates[start:end] = best
        used_tx += float(cost.rate_inv(best)) * (end - start)
        used_rx += float(cost.decode_cost(best)) * (end - start)
        bounds.append(end)
        levels.append(best)
        start = end
    policy = _policy_from_rates(rates, cost, cost.decode_cost(rates), trace.helper_energy)
    return Solution(
        ScenarioKind.S1_both_batteries, policy, float(np.sum(rates)),
        segments=SegmentSchedule(tuple(bounds), tuple(levels), rates),
    )


def solve_s2(rx_energy, helper_energy, alpha: float, cost: CostModel) -> Solution:
    """Full-power transmitter, battery-less receiver.

    Transmitter inputs are not needed; the receiver consumption is the
    min-constrained fill of ``rx + alpha * helper``.
    """
    rx = np.asarray(rx_energy, dtype=float)
    h = np.asarray(helper_energy, dtype=float)
    require_valid(EnergyTrace(rx.size, np.zeros_like(rx), rx, h, alpha))
    q, state = min_constrained_waterfill(rx, h, alpha)
    if alpha > 0:
        delta = np.maximum(q - rx, 0.0) / alpha
    else:
        if np.any(q > rx + REL_TOL * (1.0 + rx)):
            raise RuntimeError("receiver level above harvest with alpha = 0")
        delta = np.zeros_like(q)
    rates = cost.decode_inv(q)
    policy = _policy_from_rates(rates, cost, q, delta)
    diagnostics = []
    if state.dropped_helper > 0:
        diagnostics.append(f"dropped {state.dropped_helper:.6g} helper units stranded after the last included slot")
    return Solution(
        ScenarioKind.S2_fullpower_tx_nobatt_rx, policy, float(np.sum(rates)),
        diagnostics=tuple(diagnostics), rx_levels=q, exclusion=state,
    )


def _no_battery_rx_policy(rates, trace: EnergyTrace, cost: CostModel) -> Policy:
    # the battery-less receiver burns at least its own harvest every slot
    q = np.maximum(cost.decode_cost(rates), trace.rx_energy)
    delta = np.zeros(trace.n_slots)
    if trace.alpha > 0:
        delta = transfer_schedule(q, trace.rx_energy, trace.helper_energy, trace.alpha)
    return _policy_from_rates(rates, cost, q, delta)


def _s3_upper_bound(trace: EnergyTrace, cost: CostModel) -> float:
    # giving the receiver a battery, or the transmitter unlimited power, can only help
    both = solve_s1(trace, cost).objective
    rx_only = solve_s2(trace.rx_energy, trace.helper_energy, trace.alpha, cost).objective
    return min(both, rx_only)


def solve_s3(trace: EnergyTrace, cost: CostModel, refine: bool = True) -> Solution:
    """Battery transmitter, battery-less receiver.

    Slot by slot: fill the receiver side over the remaining slots as if the
    transmitter were full power, fill the transmitter under the resulting
    per-slot rate caps, then keep at slot ``k`` only the receiver energy the
    transmitter can use and save the surplus at the helper for slot ``k + 1``.
    Between passes the helper state is the transfer schedule realised by the
    receiver fill.  A final capped fill under the settled receiver budgets
    gives the rates.

    The greedy passes are not optimal on every trace.  With ``refine`` the
    helper schedule is also computed by an interior-point solve of the joint
    problem and the better of the two schedules is kept; ``diagnostics``
    records when the greedy result was replaced.  The solve is skipped when the
    greedy objective already meets the relaxation bound.
    """
    require_valid(trace)
    n = trace.n_slots
    alpha = trace.alpha
    rx = trace.rx_energy
    tx = trace.tx_energy
    # helper holdings expressed in receiver-energy units (alpha * H)
    avail = alpha * trace.helper_energy.copy()
    tx_carry = 0.0
    passes = []
    diagnostics = []
    for k in range(n):
        if alpha > 0:
            s_bar = receiver_levels(rx[k:], avail[k:] / alpha, alpha)
            # realised schedule: each slot now holds exactly what the fill assigns it
            avail[k:] = s_bar - rx[k:]
        else:
            s_bar = rx[k:].copy()
        rbar = cost.decode_inv(s_bar)
        budgets = tx[k:].copy()
        budgets[0] += tx_carry
        r_k = float(cost.rate_fn(capped_head(budgets, cost.rate_inv(rbar))))
        need_k = float(cost.decode_cost(r_k))
        if rx[k] < need_k:
            saved = max(float(s_bar[0]) - need_k, 0.0)
        else:
            saved = max(float(s_bar[0]) - rx[k], 0.0)
        if alpha > 0 and saved > 0:
            saved = min(saved, avail[k])
            avail[k] -= saved
            if k + 1 < n:
                avail[k + 1] += saved
            else:
                diagnostics.append(f"{saved:.6g} receiver units of helper energy remain unused after the last slot")
        tx_carry = budgets[0] - float(cost.rate_inv(r_k))
        passes.append(TransferPass(k, float(s_bar[0]), float(rbar[0]), r_k, float(saved),
                                   float(saved / alpha) if alpha > 0 else 0.0))
    rx_budget = rx + avail
    caps = cost.rate_inv(cost.decode_inv(rx_budget))
    fill = capped_waterfill(tx, caps)
    rates = cost.rate_fn(fill.per_slot)
    objective = float(np.sum(rates))

    if refine and alpha > 0 and objective < _s3_upper_bound(trace, cost) - 1e-9 * (1.0 + abs(objective)):
        delivery = optimal_helper_delivery(tx, rx, alpha * trace.helper_energy, cost.beta)
        alt_budget = rx + delivery
        alt_fill = capped_waterfill(tx, cost.rate_inv(cost.decode_inv(alt_budget)))
        alt_rates = cost.rate_fn(alt_fill.per_slot)
        alt_objective = float(np.sum(alt_rates))
        if alt_objective > objective + 1e-9 * (1.0 + abs(objective)):
            diagnostics.append(
                f"greedy passes were {alt_objective - objective:.6g} bits short of the "
                "interior-point schedule, which replaced them"
            )
            rx_budget, fill, rates, objective = alt_budget, alt_fill, alt_rates, alt_objective

    policy = _no_battery_rx_policy(rates, trace, cost)
    return Solution(
        ScenarioKind.S3_battery_tx_nobatt_rx, policy, objective,
        segments=fill, diagnostics=tuple(diagnostics), rx_levels=rx_budget,
        passes=tuple(passes),
    )


def solve_s4(trace: EnergyTrace, cost: CostModel) -> Solution:
    """Neither transmitter nor receiver has a battery.

    The receiver fill is capped by what each slot's transmitter harvest can
    use, ``phi(g(E_i))``; the rate is ``min(g(E_i), phi^{-1}(level_i))``.
    """
    require_valid(trace)
    caps = cost.decode_cost(cost.rate_fn(trace.tx_energy))
    s_bar, state = min_capped_waterfill(trace.rx_energy, trace.helper_energy, trace.alpha, caps)
    rates = np.minimum(cost.rate_fn(trace.tx_energy), cost.decode_inv(s_bar))
    policy = _no_battery_rx_policy(rates, trace, cost)
    diagnostics = [
        f"slot {i + 1}: transmitter cannot use the receiver's own harvest (cap below floor)"
        for i in sorted(state.infeasible_caps)
    ]
    if state.dropped_helper > 0:
        diagnostics.append(f"dropped {state.dropped_helper:.6g} helper units stranded after the last included slot")
    return Solution(
        ScenarioKind.S4_no_batteries, policy, float(np.sum(rates)),
        diagnostics=tuple(diagnostics), rx_levels=s_bar, exclusion=state,
    )


def solve(kind, trace: EnergyTrace, cost: CostModel) -> Solution:
    kind = ScenarioKind.parse(kind)
    if kind is ScenarioKind.S1_both_batteries:
        return solve_s1(trace, cost)
    if kind is ScenarioKind.S2_fullpower_tx_nobatt_rx:
        require_valid(trace)
        return solve_s2(trace.rx_energy, trace.helper_energy, trace.alpha, cost)
    if kind is ScenarioKind.S3_battery_tx_nobatt_rx:
        return solve_s3(trace, cost)
    return solve_s4(trace, cost)
