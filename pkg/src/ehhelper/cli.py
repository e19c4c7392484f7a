"""Command line entry point: ``ehhelper solve --scenario s2 --input trace.json``.

Exit status: 0 on success, 1 when the policy is infeasible or verification
fails, 2 on any input or usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from ehhelper.io import (
    TraceParseError,
    Verdict,
    build_report,
    format_report,
    load_trace,
    plot_series,
    write_plot_data,
)
from ehhelper.oracle import MAX_ORACLE_SLOTS, brute_force, check_feasible, constraint_system
from ehhelper.scenarios import InfeasibleTransferError, ScenarioKind, solve

log = logging.getLogger("ehhelper")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ehhelper", description="Offline throughput-optimal schedules "
                     "for an energy harvesting link assisted by a helper node.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("solve", help="solve one trace file")
    s.add_argument("--scenario", required=True, type=str.lower, choices=[k.value for k in ScenarioKind])
    s.add_argument("--input", required=True, help="trace file (JSON)")
    s.add_argument("--verify", action="store_true",
                   help="check feasibility and compare with the brute-force oracle (N <= %d)" % MAX_ORACLE_SLOTS)
    s.add_argument("--seed", type=int, default=0, help="oracle seed (default 0)")
    s.add_argument("--output", help="write the JSON report here")
    s.add_argument("--plot-data", help="write step series as CSV here")
    s.add_argument("--quiet", action="store_true", help="do not print the table")
    return parser


def _verify(kind, trace, cost, solution, slack, seed) -> Verdict:
    if trace.n_slots > MAX_ORACLE_SLOTS:
        log.warning("N=%d exceeds the oracle limit of %d; verifying feasibility only",
                    trace.n_slots, MAX_ORACLE_SLOTS)
        return Verdict(passed=slack.feasible, mode="feasibility")
    ref = brute_force(constraint_system(kind, trace, cost), seed=seed)
    tol = max(1e-3, 1e-3 * abs(ref.objective))
    gap = abs(solution.objective - ref.objective)
    return Verdict(passed=slack.feasible and gap <= tol, mode="oracle",
                   oracle_objective=ref.objective, gap=gap, tolerance=tol)


def run(args) -> int:
    kind = ScenarioKind.parse(args.scenario)
    try:
        trace, cost = load_trace(args.input)
    except OSError as exc:
        print(f"error: cannot read {args.input}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INPUT
    except TraceParseError as exc:
        for msg in exc.errors:
            print(f"error: {args.input}: {msg}", file=sys.stderr)
        return EXIT_INPUT

    t0 = time.perf_counter()
    try:
        solution = solve(kind, trace, cost)
    except InfeasibleTransferError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_FAIL
    wall = time.perf_counter() - t0

    system = constraint_system(kind, trace, cost)
    slack = check_feasible(solution.policy, system)
    verdict = _verify(kind, trace, cost, solution, slack, args.seed) if args.verify else None
    report = build_report(solution, trace, slack, wall, verdict)

    try:
        if args.output:
            with open(args.output, "w") as fh:
                fh.write(report.to_json())
        if args.plot_data:
            write_plot_data(args.plot_data, plot_series(solution, trace))
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not args.quiet:
        sys.stdout.write(format_report(report))

    if not report.feasible or (verdict is not None and not verdict.passed):
        return EXIT_FAIL
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except Exception as exc:  # keep the exit code total
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
