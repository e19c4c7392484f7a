"""Trace files, solve reports and plot series.

A trace file is a JSON object::

    {"n_slots": 3,
     "tx_energy": [6.5, 13.5, 9], "rx_energy": [5, 8, 3],
     "helper_energy": [7, 1, 2], "alpha": 0.7,
     "cost_model": {"kind": "scaled_inverse_rate", "beta": 1.0}}

``cost_model`` may be omitted (defaults to ``beta = 1``).  Every problem is
reported as ``"<field>: <message>"`` so that it can be traced to the input.
Energies are unit-less; rates are in bits per channel use.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ehhelper.model import CostModel, EnergyTrace, Policy, builtin_cost_model, validate_trace
from ehhelper.oracle import SlackReport
from ehhelper.scenarios import ScenarioKind, Solution

_ARRAYS = ("tx_energy", "rx_energy", "helper_energy")


class TraceParseError(ValueError):
    """A trace document that cannot be turned into a valid trace."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def parse_trace(document) -> tuple[EnergyTrace, CostModel]:
    """Parse a trace from JSON text or an already decoded mapping."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise TraceParseError([f"line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    if not isinstance(document, dict):
        raise TraceParseError(["document: expected a JSON object"])

    errors = []
    n = document.get("n_slots")
    if n is None:
        errors.append("n_slots: required")
    elif not isinstance(n, int) or isinstance(n, bool) or n < 1:
        errors.append(f"n_slots: expected a positive integer, got {n!r}")
        n = None

    arrays = {}
    for name in _ARRAYS:
        values = document.get(name)
        if values is None:
            errors.append(f"{name}: required")
            continue
        if not isinstance(values, list):
            errors.append(f"{name}: expected an array of numbers")
            continue
        bad = [i for i, v in enumerate(values) if not _is_number(v) or not math.isfinite(v)]
        for i in bad:
            errors.append(f"{name}[{i}]: expected a finite number, got {values[i]!r}")
        errors.extend(f"{name}[{i}]: must be >= 0, got {v!r}"
                      for i, v in enumerate(values) if i not in bad and v < 0)
        if not bad:
            arrays[name] = values

    alpha = document.get("alpha")
    if alpha is None:
        errors.append("alpha: required")
    elif not _is_number(alpha):
        errors.append(f"alpha: expected a number, got {alpha!r}")
        alpha = None

    cost = None
    spec = document.get("cost_model", {})
    if not isinstance(spec, dict):
        errors.append("cost_model: expected an object with kind and beta")
    else:
        kind = spec.get("kind", "scaled_inverse_rate")
        beta = spec.get("beta", 1.0)
        if not _is_number(beta):
            errors.append(f"cost_model.beta: expected a number, got {beta!r}")
        else:
            try:
                cost = builtin_cost_model(kind, float(beta))
            except ValueError as exc:
                field_name = "cost_model.beta" if "beta" in str(exc) else "cost_model.kind"
                errors.append(f"{field_name}: {exc}")

    unknown = sorted(set(document) - {"n_slots", "alpha", "cost_model", *_ARRAYS})
    errors.extend(f"{k}: unknown field" for k in unknown)

    if not errors:
        trace = EnergyTrace(n, arrays["tx_energy"], arrays["rx_energy"], arrays["helper_energy"], alpha)
        errors.extend(validate_trace(trace))
    if errors:
        raise TraceParseError(errors)
    return trace, cost


def load_trace(path) -> tuple[EnergyTrace, CostModel]:
    return parse_trace(Path(path).read_text())


def trace_to_dict(trace: EnergyTrace, cost: CostModel) -> dict:
    return {
        "n_slots": trace.n_slots,
        "tx_energy": trace.tx_energy.tolist(),
        "rx_energy": trace.rx_energy.tolist(),
        "helper_energy": trace.helper_energy.tolist(),
        "alpha": trace.alpha,
        "cost_model": cost.to_dict(),
    }


@dataclass
class Verdict:
    passed: bool
    mode: str  # "oracle" or "feasibility"
    oracle_objective: float | None = None
    gap: float | None = None
    tolerance: float | None = None


@dataclass
class SolveReport:
    scenario: ScenarioKind
    objective: float
    table: dict[str, list[float]]
    slack: dict[str, float]
    feasible: bool
    wall_time: float
    verdict: Verdict | None = None
    diagnostics: list[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.table["i"])

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario.value,
            "objective_bits": self.objective,
            "feasible": self.feasible,
            "wall_time_s": self.wall_time,
            "slots": self.table,
            "min_slack": self.slack,
            "diagnostics": self.diagnostics,
        }
        if self.verdict is not None:
            out["verdict"] = {
                "result": "PASS" if self.verdict.passed else "FAIL",
                "mode": self.verdict.mode,
                "oracle_objective_bits": self.verdict.oracle_objective,
                "gap": self.verdict.gap,
                "tolerance": self.verdict.tolerance,
            }
        return out

    def to_json(self) -> str:
        # json writes floats with repr, the shortest text that round-trips exactly
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"


def build_report(solution: Solution, trace: EnergyTrace, slack: SlackReport, wall_time: float,
                 verdict: Verdict | None = None) -> SolveReport:
    pol = solution.policy
    n = trace.n_slots
    table = {
        "i": list(range(1, n + 1)),
        "E": trace.tx_energy.tolist(),
        "Ebar": trace.rx_energy.tolist(),
        "H": trace.helper_energy.tolist(),
        "p": pol.tx_power.tolist(),
        "r": pol.rate.tolist(),
        "q": pol.rx_consumption.tolist(),
        "delta": pol.helper_transfer.tolist(),
    }
    return SolveReport(
        scenario=solution.scenario,
        objective=float(solution.objective),
        table=table,
        slack=slack.min_slack | {"nonnegativity": slack.nonnegativity},
        feasible=slack.feasible,
        wall_time=wall_time,
        verdict=verdict,
        diagnostics=list(solution.diagnostics),
    )


def format_report(report: SolveReport) -> str:
    cols = [("i", "i"), ("E", "E"), ("Ebar", "Ebar"), ("H", "H"), ("p", "p"),
            ("r", "r [bits/use]"), ("q", "q"), ("delta", "delta")]
    lines = [
        f"scenario {report.scenario.value}  objective {report.objective:.9g} bits",
        "energies in energy units",
    ]
    header = "  ".join(f"{title:>12}" for _, title in cols)
    lines.append(header)
    for row in range(report.n_rows):
        cells = []
        for key, _ in cols:
            v = report.table[key][row]
            cells.append(f"{v:>12d}" if key == "i" else f"{v:>12.6f}")
        lines.append("  ".join(cells))
    slack = ", ".join(f"{k} {v:.3g}" for k, v in report.slack.items())
    lines.append(f"min slack: {slack}")
    lines.append("feasible" if report.feasible else "INFEASIBLE")
    if report.verdict is not None:
        v = report.verdict
        word = "PASS" if v.passed else "FAIL"
        if v.mode == "oracle":
            lines.append(f"verdict: {word} (oracle {v.oracle_objective:.9g} bits, gap {v.gap:.3g}, tol {v.tolerance:.3g})")
        else:
            lines.append(f"verdict: {word} (feasibility only)")
    lines.extend(f"note: {d}" for d in report.diagnostics)
    lines.append(f"solver wall time {report.wall_time * 1e3:.3f} ms")
    return "\n".join(lines) + "\n"


def plot_series(solution: Solution, trace: EnergyTrace) -> list[tuple[str, int, float]]:
    """Step series in long form: (quantity, slot boundary, level).

    Per-slot quantities ``p`` and ``q`` hold their level on ``(b-1, b]`` and are
    emitted at both ends of each slot.  Cumulative quantities are sampled at
    boundaries ``0..N``.
    """
    pol: Policy = solution.policy
    rows = []
    for name, values in (("p", pol.tx_power), ("q", pol.rx_consumption)):
        for b, v in enumerate(values, start=1):
            rows.append((name, b - 1, float(v)))
            rows.append((name, b, float(v)))
    cumulative = {
        "tx_budget": trace.tx_energy,
        "tx_used": pol.tx_power,
        "rx_budget": trace.rx_energy + trace.alpha * pol.helper_transfer,
        "rx_used": pol.rx_consumption,
        "helper_budget": trace.helper_energy,
        "helper_sent": pol.helper_transfer,
    }
    for name, values in cumulative.items():
        csum = np.concatenate(([0.0], np.cumsum(values)))
        rows.extend((f"cum_{name}", b, float(v)) for b, v in enumerate(csum))
    return rows


def write_plot_data(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "boundary", "level"])
        for name, b, v in rows:
            w.writerow([name, b, repr(v)])
