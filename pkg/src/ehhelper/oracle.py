"""Independent verification: constraint checking and a small-N optimiser.

The optimiser works on the joint variables of each scenario's original
formulation (helper transfers included, even where the solvers eliminate
them) and never calls the waterfilling code.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ehhelper.model import CostModel, EnergyTrace, Policy
from ehhelper.scenarios import ScenarioKind

FEASIBILITY_TOL = 1e-7
MAX_ORACLE_SLOTS = 5


@dataclass(frozen=True)
class Constraint:
    name: str
    shape: str       # "prefix" or "per-slot"
    sense: str       # ">=" or "<="
    variables: str


_CONSTRAINTS = {
    ScenarioKind.S1_both_batteries: (
        Constraint("tx_causality", "prefix", "<=", "transmit power vs transmitter harvest"),
        Constraint("rx_causality", "prefix", "<=", "decoding energy vs receiver harvest + alpha * transfer"),
        Constraint("helper_causality", "prefix", "<=", "helper transfer vs helper harvest"),
    ),
    ScenarioKind.S2_fullpower_tx_nobatt_rx: (
        Constraint("rx_floor", "per-slot", ">=", "receiver consumption vs receiver harvest"),
        Constraint("rx_causality", "prefix", "<=", "receiver consumption vs receiver harvest + alpha * transfer"),
        Constraint("helper_causality", "prefix", "<=", "helper transfer vs helper harvest"),
    ),
    ScenarioKind.S3_battery_tx_nobatt_rx: (
        Constraint("tx_causality", "prefix", "<=", "transmit power vs transmitter harvest"),
        Constraint("rx_causality", "prefix", "<=", "receiver consumption vs receiver harvest + alpha * transfer"),
        Constraint("helper_causality", "prefix", "<=", "helper transfer vs helper harvest"),
        Constraint("rx_floor", "per-slot", ">=", "receiver consumption vs receiver harvest"),
        Constraint("decodable_rate", "per-slot", "<=", "rate vs receiver-decodable rate"),
    ),
    ScenarioKind.S4_no_batteries: (
        Constraint("tx_per_slot", "per-slot", "<=", "rate vs rate of the slot's transmitter harvest"),
        Constraint("rx_causality", "prefix", "<=", "receiver consumption vs receiver harvest + alpha * transfer"),
        Constraint("helper_causality", "prefix", "<=", "helper transfer vs helper harvest"),
        Constraint("rx_floor", "per-slot", ">=", "receiver consumption vs receiver harvest"),
        Constraint("decodable_rate", "per-slot", "<=", "rate vs receiver-decodable rate"),
    ),
}


@dataclass(frozen=True)
class ConstraintSystem:
    scenario: ScenarioKind
    trace: EnergyTrace
    cost: CostModel
    constraints: tuple[Constraint, ...]


def constraint_system(scenario, trace: EnergyTrace, cost: CostModel) -> ConstraintSystem:
    kind = ScenarioKind.parse(scenario)
    return ConstraintSystem(kind, trace, cost, _CONSTRAINTS[kind])


@dataclass(frozen=True)
class SlackReport:
    slacks: dict[str, np.ndarray]
    nonnegativity: float
    tol: float = FEASIBILITY_TOL

    @property
    def min_slack(self) -> dict[str, float]:
        return {k: float(np.min(v)) for k, v in self.slacks.items()}

    @property
    def worst(self) -> float:
        return min(min(self.min_slack.values()), self.nonnegativity)

    @property
    def feasible(self) -> bool:
        return self.worst >= -self.tol


def _slack_vectors(kind: ScenarioKind, trace: EnergyTrace, cost: CostModel,
                   p, r, q, delta) -> dict[str, np.ndarray]:
    e, rx, h, a = trace.tx_energy, trace.rx_energy, trace.helper_energy, trace.alpha
    helper = np.cumsum(h - delta)
    if kind is ScenarioKind.S1_both_batteries:
        return {
            "tx_causality": np.cumsum(e - p),
            "rx_causality": np.cumsum(rx + a * delta - cost.decode_cost(cost.rate_fn(p))),
            "helper_causality": helper,
        }
    if kind is ScenarioKind.S2_fullpower_tx_nobatt_rx:
        return {
            "rx_floor": q - rx,
            "rx_causality": np.cumsum(rx + a * delta - q),
            "helper_causality": helper,
        }
    # q is the receiver's burn phi(rbar); the decodable rate is phi^{-1}(q)
    out = {}
    if kind is ScenarioKind.S3_battery_tx_nobatt_rx:
        out["tx_causality"] = np.cumsum(e - cost.rate_inv(r))
    else:
        out["tx_per_slot"] = cost.rate_fn(e) - r
    out["rx_causality"] = np.cumsum(rx + a * delta - q)
    out["helper_causality"] = helper
    out["rx_floor"] = q - rx
    out["decodable_rate"] = cost.decode_inv(np.maximum(q, 0.0)) - r
    return out


def check_feasible(policy: Policy, system: ConstraintSystem, tol: float = FEASIBILITY_TOL) -> SlackReport:
    """Signed slack of every constraint of the scenario (negative = violated)."""
    n = system.trace.n_slots
    arrays = (policy.tx_power, policy.rate, policy.rx_consumption, policy.helper_transfer)
    if any(len(a) != n for a in arrays):
        raise ValueError(f"policy length does not match n_slots={n}")
    slacks = _slack_vectors(system.scenario, system.trace, system.cost, *arrays)
    nonneg = float(min(np.min(a) for a in arrays))
    return SlackReport(slacks, min(nonneg, 0.0), tol)


@dataclass(frozen=True)
class OracleResult:
    objective: float
    argmax: Policy
    grid_step: float
    iterations: int
    converged: bool
    worst_slack: float


class _Problem:
    """Joint-variable view of one scenario for the optimiser."""

    def __init__(self, system: ConstraintSystem):
        self.kind = system.scenario
        self.trace = system.trace
        self.cost = system.cost
        self.n = system.trace.n_slots
        t, c = self.trace, self.cost
        tot_e = float(np.sum(t.tx_energy))
        tot_rx = float(np.sum(t.virtual_rx_energy))
        tot_h = float(np.sum(t.helper_energy))
        if self.kind is ScenarioKind.S1_both_batteries:
            self.blocks = 2
            upper = [tot_e, tot_h]
        elif self.kind is ScenarioKind.S2_fullpower_tx_nobatt_rx:
            self.blocks = 2
            upper = [tot_rx, tot_h]
        else:
            self.blocks = 3
            r_max = float(c.decode_inv(tot_rx))
            upper = [r_max, r_max, tot_h]
        self.upper = np.repeat(np.array(upper), self.n)

    def floor_start(self) -> np.ndarray:
        """Zero rate with the receiver burning exactly its own harvest."""
        z = np.zeros(self.upper.size)
        n, rx = self.n, self.trace.rx_energy
        if self.kind is ScenarioKind.S2_fullpower_tx_nobatt_rx:
            z[:n] = rx
        elif self.blocks == 3:
            z[n:2 * n] = self.cost.decode_inv(rx)
        return z

    def policy(self, z) -> Policy:
        z = np.asarray(z, dtype=float)
        n, c = self.n, self.cost
        if self.kind is ScenarioKind.S1_both_batteries:
            p, delta = z[:n], z[n:]
            r = c.rate_fn(np.maximum(p, 0.0))
            return Policy(p, r, c.decode_cost(r), delta)
        if self.kind is ScenarioKind.S2_fullpower_tx_nobatt_rx:
            q, delta = z[:n], z[n:]
            r = c.decode_inv(np.maximum(q, 0.0))
            return Policy(c.rate_inv(r), r, q, delta)
        r, rbar, delta = z[:n], z[n:2 * n], z[2 * n:]
        return Policy(c.rate_inv(r), r, c.decode_cost(rbar), delta)

    def objective(self, z) -> float:
        return float(np.sum(self.policy(z).rate))

    def residuals(self, z) -> np.ndarray:
        pol = self.policy(z)
        n = self.n
        if self.kind in (ScenarioKind.S3_battery_tx_nobatt_rx, ScenarioKind.S4_no_batteries):
            # optimise over rbar directly; the decodable-rate constraint in rate form keeps it smooth
            r, rbar = z[:n], z[n:2 * n]
            s = _slack_vectors(self.kind, self.trace, self.cost, pol.tx_power, r,
                               pol.rx_consumption, pol.helper_transfer)
            s["decodable_rate"] = rbar - r
        else:
            s = _slack_vectors(self.kind, self.trace, self.cost, pol.tx_power, pol.rate,
                               pol.rx_consumption, pol.helper_transfer)
        return np.concatenate(list(s.values()))

    def violation(self, z) -> float:
        return max(0.0, -float(np.min(self.residuals(z))), -float(np.min(z)))


def _polish(prob: _Problem, z: np.ndarray, steps, frozen=()) -> tuple[np.ndarray, int]:
    """Coordinate and pairwise-transfer search on a shrinking grid."""
    n = prob.n
    frozen = list(frozen)
    moves = []
    for b in range(prob.blocks):
        for i in range(n):
            e = np.zeros(z.size)
            e[b * n + i] = 1.0
            moves += [e, -e]
            for j in range(i + 1, n):
                t = np.zeros(z.size)
                t[b * n + i], t[b * n + j] = -1.0, 1.0
                moves += [t, -t]
    moves = [m for m in moves if not np.any(m[frozen])]
    best = prob.objective(z)
    viol = prob.violation(z)
    sweeps = 0
    for h in steps:
        improved = True
        while improved and sweeps < 10_000:
            improved = False
            sweeps += 1
            for m in moves:
                cand = z + h * m
                if np.min(cand) < 0:
                    continue
                val = prob.objective(cand)
                if val > best + 1e-15 and prob.violation(cand) <= viol + 1e-12:
                    z, best, viol = cand, val, max(viol, prob.violation(cand))
                    improved = True
    return z, sweeps


def _polish_steps(grid_step: float) -> list[float]:
    steps, h = [], 0.1
    while h > grid_step * (1 + 1e-9):
        steps.append(h)
        h /= 10.0
    steps.append(grid_step)
    return steps


def brute_force(system: ConstraintSystem, grid_step: float = 1e-3, seed: int = 0,
                starts: int = 3, pinned_rates: dict[int, float] | None = None) -> OracleResult:
    """Best objective found for the scenario's joint problem (N <= 5).

    Runs SLSQP from several seeded starts, keeps the best point whose
    constraint violation is below the feasibility tolerance, then polishes
    it on a decade grid ending at ``grid_step``.

    ``pinned_rates`` maps 0-based slots to fixed rates (S3 and S4 only), which
    restricts the search to policies using exactly those rates.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    prob = _Problem(system)
    if prob.n > MAX_ORACLE_SLOTS:
        raise ValueError(f"oracle limited to N <= {MAX_ORACLE_SLOTS}, got {prob.n}")
    rng = np.random.default_rng(seed)
    size = prob.upper.size
    pinned = {int(i): float(v) for i, v in (pinned_rates or {}).items()}
    if pinned and prob.blocks != 3:
        raise ValueError("pinned_rates is only supported for s3 and s4")
    # SLSQP copes badly with equal bounds, so pinned coordinates are removed
    free = np.array([i for i in range(size) if i not in pinned], dtype=int)
    base = np.zeros(size)
    base[list(pinned)] = list(pinned.values())

    def full(zf):
        z = base.copy()
        z[free] = zf
        return z

    bounds = [(0.0, max(u, 0.0)) for u in prob.upper[free]]
    # pinning can turn a tight constraint into a constant a few ulps below zero
    relax = 0.1 * FEASIBILITY_TOL if pinned else 0.0
    cons = [{"type": "ineq", "fun": lambda zf: prob.residuals(full(zf)) + relax}]
    candidates = [prob.floor_start()] + [rng.uniform(0, 1, size) * prob.upper / prob.n for _ in range(starts - 1)]
    for z0 in candidates:
        for i, v in pinned.items():
            z0[prob.n + i] = max(z0[prob.n + i], v)

    best_z, best_val, best_viol, iters, converged = None, -np.inf, np.inf, 0, False
    for z0 in candidates:
        with warnings.catch_warnings():
            # SLSQP clips iterates that stray outside the box; expected here
            warnings.filterwarnings("ignore", message="Values in x were outside bounds",
                                    category=RuntimeWarning)
            res = minimize(lambda zf: -prob.objective(full(zf)), z0[free], method="SLSQP", bounds=bounds,
                           constraints=cons, options={"maxiter": 500, "ftol": 1e-13})
        iters += int(res.nit)
        z = full(np.clip(res.x, 0.0, None))
        viol = prob.violation(z)
        val = prob.objective(z)
        ok = viol <= FEASIBILITY_TOL
        better = (ok and (best_viol > FEASIBILITY_TOL or val > best_val)) or (
            not ok and best_viol > FEASIBILITY_TOL and viol < best_viol)
        converged = converged or (bool(res.success) and ok)
        if better:
            best_z, best_val, best_viol = z, val, viol
    best_z, sweeps = _polish(prob, best_z, _polish_steps(grid_step), frozen=pinned)
    policy = prob.policy(best_z)
    return OracleResult(
        objective=prob.objective(best_z),
        argmax=policy,
        grid_step=grid_step,
        iterations=iters + sweeps,
        converged=converged and prob.violation(best_z) <= FEASIBILITY_TOL,
        worst_slack=-prob.violation(best_z),
    )
