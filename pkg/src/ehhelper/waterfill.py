"""Directional waterfilling primitives.

Every primitive allocates a per-slot quantity ``x`` under forward-only
energy causality, ``sum(x[:j]) <= sum(budgets[:j])`` for every prefix ``j``.
The allocations do not depend on which strictly concave per-slot objective
is maximised, so the primitives are objective-agnostic.

Slot indices are 0-based throughout the Python API.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import isotonic_regression

logger = logging.getLogger(__name__)

# relative tolerance used for tie-breaking and floor comparisons
REL_TOL = 1e-12


@dataclass(frozen=True)
class SegmentSchedule:
    """Piecewise-constant allocation.

    ``boundaries`` holds the (exclusive, 1-based) end of every segment, so the
    n-th segment covers slots ``boundaries[n-1] .. boundaries[n] - 1`` in
    0-based terms with an implicit leading boundary 0.  For capped fills the
    per-slot values inside a segment are ``min(cap, level)``.
    """

    boundaries: tuple[int, ...]
    segment_levels: tuple[float, ...]
    per_slot: np.ndarray

    def __post_init__(self):
        arr = np.array(self.per_slot, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "per_slot", arr)

    @property
    def n_slots(self) -> int:
        return len(self.per_slot)


@dataclass(frozen=True)
class ExclusionState:
    """Book-keeping of the exclusion loop.

    ``rounds`` records, per iteration, the slots excluded in that iteration
    and the levels the fill produced on the slots still included (NaN at
    slots excluded before the iteration).
    """

    excluded: frozenset[int]
    newly_excluded: frozenset[int]
    effective_helper: np.ndarray
    dropped_helper: float = 0.0
    infeasible_caps: frozenset[int] = frozenset()
    rounds: tuple[tuple[frozenset[int], np.ndarray], ...] = field(default=(), repr=False)

    @property
    def iterations(self) -> int:
        return len(self.rounds)


def _as_budget_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name}: empty input")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: entries must be finite")
    if np.any(arr < 0):
        raise ValueError(f"{name}: entries must be >= 0")
    return arr


def staircase_levels(budgets) -> SegmentSchedule:
    """Causality-constrained filling of ``budgets`` (no caps).

    Each segment ends at the index minimising the running average of the
    remaining budget, the smallest such index on ties.  This is the greatest
    convex minorant of the cumulative budget curve, built with a monotone
    stack in O(N).
    """
    b = _as_budget_array(budgets, "budgets")
    n = b.size
    cum = np.concatenate(([0.0], np.cumsum(b)))
    scale = REL_TOL * (1.0 + float(cum[-1]))

    hull = [0]
    for j in range(1, n + 1):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            left = (cum[i1] - cum[i0]) / (i1 - i0)
            right = (cum[j] - cum[i1]) / (j - i1)
            # strict: collinear points stay as boundaries (smallest end index)
            if left > right + scale:
                hull.pop()
            else:
                break
        hull.append(j)

    levels = []
    per_slot = np.empty(n)
    for i0, i1 in zip(hull[:-1], hull[1:]):
        level = (cum[i1] - cum[i0]) / (i1 - i0)
        levels.append(float(level))
        per_slot[i0:i1] = level
    return SegmentSchedule(tuple(hull[1:]), tuple(levels), per_slot)


def _first_capped_segment(remaining: np.ndarray, caps: np.ndarray,
                          below: float = float("inf")) -> tuple[int, float]:
    """Level and length of the first segment of a capped fill.

    ``remaining[j]`` is the cumulative budget still available over the first
    ``j + 1`` slots of the window.  The level is the smallest ``w`` for which
    some prefix satisfies ``sum(min(caps, w)) >= remaining``; returns
    ``(length, inf)`` when no prefix constraint can become tight.  A caller
    that already knows the level is at most ``below`` can pass it to shrink
    the breakpoint search.
    """
    m = remaining.size
    tol = REL_TOL * (1.0 + float(np.max(remaining)))

    def gap(w: float) -> float:
        return float(np.max(np.cumsum(np.minimum(caps, w)) - remaining))

    finite_caps = caps[np.isfinite(caps)]
    # the uncapped level is a lower bound on the capped one
    floor = float(np.min(remaining / np.arange(1, m + 1)))
    inner = finite_caps[(finite_caps > floor) & (finite_caps < below)]
    breaks = np.unique(np.concatenate(([0.0, floor], inner)))
    if np.isfinite(below):
        breaks = np.append(breaks, below)
    if gap(0.0) >= -tol:
        zero = np.flatnonzero(remaining <= tol)
        return int(zero[0]) + 1, 0.0
    if finite_caps.size == m and gap(float(np.max(finite_caps))) < -tol:
        return m, float("inf")

    # bracket the root of the piecewise-linear gap between two breakpoints
    lo, hi = 0, breaks.size  # gap(breaks[lo]) < 0, gap(breaks[hi]) >= 0 or hi = inf
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if gap(float(breaks[mid])) < 0:
            lo = mid
        else:
            hi = mid
    w_lo = float(breaks[lo])
    below = caps <= w_lo
    fixed = np.cumsum(np.where(below, caps, 0.0))
    free = np.cumsum(~below)
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = np.where(free > 0, (remaining - fixed) / free, np.inf)
    level = float(np.min(roots))
    if not np.isfinite(level):
        return m, float("inf")
    end = int(np.flatnonzero(roots <= level + REL_TOL * (1.0 + abs(level)))[0])
    return end + 1, max(level, w_lo)


def capped_head(budgets, caps) -> float:
    """First-slot value of :func:`capped_waterfill` (only its first segment is solved)."""
    c = np.asarray(caps, dtype=float)
    remaining = np.cumsum(np.asarray(budgets, dtype=float))
    # the first slot saturates iff no prefix is exhausted at level caps[0]
    tol = REL_TOL * (1.0 + float(remaining[-1]))
    if np.max(np.cumsum(np.minimum(c, c[0])) - remaining) < -tol:
        return float(c[0])
    _, level = _first_capped_segment(remaining, c, below=float(c[0]))
    return float(min(c[0], level))


def capped_waterfill(budgets, caps) -> SegmentSchedule:
    """Causality-constrained filling with per-slot upper limits.

    Saturated slots sit at their cap, the others in a segment share one
    level.  Budget may be left unused when caps bind.
    """
    b = _as_budget_array(budgets, "budgets")
    c = np.asarray(caps, dtype=float).reshape(-1)
    if c.size != b.size:
        raise ValueError(f"length mismatch: {b.size} budgets vs {c.size} caps")
    if np.any(np.isnan(c)) or np.any(c < 0):
        raise ValueError("caps: entries must be >= 0")
    n = b.size
    cum = np.cumsum(b)
    out = np.empty(n)
    bounds, levels = [], []
    start, used = 0, 0.0
    while start < n:
        remaining = np.maximum(cum[start:] - used, 0.0)
        length, level = _first_capped_segment(remaining, c[start:])
        stop = start + length
        out[start:stop] = np.minimum(c[start:stop], level)
        if np.isfinite(level):
            used = max(used, float(cum[stop - 1]))
        else:
            used += float(np.sum(out[start:stop]))
        bounds.append(stop)
        levels.append(level)
        start = stop
    return SegmentSchedule(tuple(bounds), tuple(levels), out)


def fill_levels(budgets) -> np.ndarray:
    """Per-slot output of :func:`staircase_levels` without segment bookkeeping.

    The slopes of the greatest convex minorant of the cumulative budget are
    the non-decreasing least-squares fit of the budgets, which PAVA computes
    in compiled code.
    """
    return isotonic_regression(np.asarray(budgets, dtype=float)).x


def forward_excluded(helper, excluded) -> tuple[np.ndarray, float]:
    """Move the helper energy of excluded slots to the next included slot.

    ``excluded`` is a boolean mask or a collection of slot indices.
    Consecutive excluded slots chain forward.  Energy stranded in an excluded
    suffix is returned separately as dropped.
    """
    h = np.array(helper, dtype=float)
    mask = np.asarray(excluded)
    if mask.dtype != bool:
        idx = np.fromiter(excluded, dtype=int)
        mask = np.zeros(h.size, dtype=bool)
        mask[idx] = True
    if not mask.any():
        return h, 0.0
    moved = np.cumsum(np.where(mask, h, 0.0))
    keep = np.flatnonzero(~mask)
    out = np.where(mask, 0.0, h)
    if keep.size:
        before = np.concatenate(([0.0], moved[keep[:-1]]))
        out[keep] += moved[keep] - before
        dropped = float(moved[-1] - moved[keep[-1]])
    else:
        dropped = float(moved[-1])
    return out, dropped


def _check_rx_inputs(rx, helper, alpha):
    rx = _as_budget_array(rx, "rx_energy")
    h = _as_budget_array(helper, "helper_energy")
    if h.size != rx.size:
        raise ValueError(f"length mismatch: {rx.size} rx_energy vs {h.size} helper_energy")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha out of range [0, 1]: {alpha!r}")
    return rx, h


def _exclusion_loop(rx, h, alpha, fill: Callable[[np.ndarray, np.ndarray], np.ndarray],
                    record: bool = True):
    n = rx.size
    excluded = np.zeros(n, dtype=bool)
    new = excluded
    rounds = []
    dropped = 0.0
    tol = REL_TOL * (1.0 + float(np.max(rx + alpha * h)))
    for _ in range(n + 1):
        if excluded.any():
            h, lost = forward_excluded(h, excluded)
            dropped += lost
        included = np.flatnonzero(~excluded)
        inc_rx = rx[included]
        inc_levels = fill(inc_rx + alpha * h[included], included)
        below = inc_levels < inc_rx - tol
        new = np.zeros(n, dtype=bool)
        new[included[below]] = True
        if record:
            levels = np.full(n, np.nan)
            levels[included] = inc_levels
            rounds.append((frozenset(np.flatnonzero(new).tolist()), levels))
        if not below.any():
            break
        excluded |= new
        if excluded.all():
            h, lost = forward_excluded(h, excluded)
            dropped += lost
            included, inc_levels = included[:0], inc_levels[:0]
            break
    else:  # pragma: no cover - each round excludes at least one slot
        raise RuntimeError("exclusion loop did not terminate")
    if dropped > 0:
        logger.warning("helper energy %.6g stranded in an excluded suffix was dropped", dropped)
    final = rx.copy()
    final[included] = inc_levels
    state = ExclusionState(
        excluded=frozenset(np.flatnonzero(excluded).tolist()),
        newly_excluded=frozenset(np.flatnonzero(new).tolist()),
        effective_helper=h,
        dropped_helper=float(dropped),
        rounds=tuple(rounds),
    )
    return final, state


def _fill_included(s, _included):
    return isotonic_regression(s).x


def receiver_levels(rx, helper, alpha: float) -> np.ndarray:
    """Levels of :func:`min_constrained_waterfill` without validation or history."""
    return _exclusion_loop(rx, helper, alpha, _fill_included, record=False)[0]


def min_constrained_waterfill(rx_energy, helper_energy, alpha: float):
    """Fill the virtual receiver budget ``rx + alpha * helper`` with per-slot floors.

    Slots whose level falls below their own harvest are excluded (pinned to
    that harvest) and their helper energy is saved for the next included
    slot; the remaining slots are refilled until no new exclusion happens.

    Returns ``(levels, state)`` with ``levels[i] >= rx_energy[i]``.
    """
    alpha = float(alpha)
    rx, h = _check_rx_inputs(rx_energy, helper_energy, alpha)
    return _exclusion_loop(rx, h, alpha, _fill_included)


def min_capped_waterfill(rx_energy, helper_energy, alpha: float, caps):
    """Exclusion loop whose inner fill is :func:`capped_waterfill`.

    ``caps`` are in receiver-energy units.  A slot whose cap lies below its
    own harvest is infeasible as a floor; it is pinned to the harvest and
    reported in ``state.infeasible_caps``.
    """
    alpha = float(alpha)
    rx, h = _check_rx_inputs(rx_energy, helper_energy, alpha)
    caps = np.asarray(caps, dtype=float).reshape(-1)
    if caps.size != rx.size:
        raise ValueError(f"length mismatch: {rx.size} rx_energy vs {caps.size} caps")
    levels, state = _exclusion_loop(
        rx, h, alpha, lambda s, included: capped_waterfill(s, caps[included]).per_slot,
    )
    bad = frozenset(int(i) for i in np.flatnonzero(caps < rx - REL_TOL * (1.0 + rx)))
    if bad:
        state = ExclusionState(
            state.excluded, state.newly_excluded, state.effective_helper,
            state.dropped_helper, bad, state.rounds,
        )
    return levels, state
