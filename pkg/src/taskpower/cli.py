"""Command-line front end: extract | estimate | schedule | multiproc | verify.

Exit codes are a stable contract: 0 success, 2 input or usage error,
3 infeasible timing requirement, 4 verification failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import analyze
from .extractor import extract_flow, parse_fu_library, parse_ir
from .flowgraph import FlowGraph, flatten, parse_flow_file, serialize_flow_file
from .oracle import (
    ENUMERATION_CAP,
    enumerate_exact,
    monte_carlo,
    outcome_count,
    pmf_max_deviation,
)
from .pmf import DEFAULT_SUPPORT_CAP, expectation, std_dev
from .reports import (
    analysis_report_text,
    assignment_report_text,
    multiproc_report_text,
    write_pmf_csv,
)
from .scheduler import (
    InfeasibleError,
    enumerate_assignments,
    multiproc_schedule,
    parse_levels_file,
)

__all__ = ["entry", "main"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_VERIFY = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskpower",
        description="Stochastic time/power estimation and energy-aware "
        "scheduling for embedded task graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="turn an IR listing into a flow file")
    p.add_argument("--ir", required=True, help="IR listing path")
    p.add_argument("--fu", required=True, help="functional-unit library path")
    p.add_argument("--out", required=True, help="flow file to write")

    p = sub.add_parser("estimate", help="analyze a flow file")
    p.add_argument("--flow", required=True, help="flow file path")
    p.add_argument("--out", required=True, help="output prefix")
    _common_analysis_flags(p)

    p = sub.add_parser("schedule", help="voltage-assignment search")
    p.add_argument("--flow", required=True, help="flow file path")
    p.add_argument("--levels", required=True, help="voltage levels file")
    p.add_argument("--out", required=True, help="output prefix")
    _common_analysis_flags(p)

    p = sub.add_parser("multiproc", help="time-constrained multiprocessor schedule")
    p.add_argument("--flow", required=True, help="flow file path")
    p.add_argument("--levels", required=True, help="voltage levels file")
    p.add_argument("--max-procs", required=True, type=int, help="processor limit")
    p.add_argument("--out", required=True, help="output prefix")
    _common_analysis_flags(p)

    p = sub.add_parser("verify", help="cross-check analysis against the oracles")
    p.add_argument("--flow", required=True, help="flow file path")
    p.add_argument("--trials", type=int, default=100_000, help="Monte Carlo trials")
    p.add_argument("--seed", type=int, default=0, help="Monte Carlo seed")
    p.add_argument("--support-cap", type=int, default=DEFAULT_SUPPORT_CAP)
    p.add_argument("--out", help="optional prefix for simulated Pmf CSVs")
    return parser


def _common_analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--deadline", type=float, help="override the flow deadline")
    p.add_argument("--confidence", type=float, help="override the flow confidence")
    p.add_argument("--support-cap", type=int, default=DEFAULT_SUPPORT_CAP,
                   help="distribution support cap")
    p.add_argument("--no-plot", action="store_true", help="skip PNG figures")


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = {
        "extract": _cmd_extract,
        "estimate": _cmd_estimate,
        "schedule": _cmd_schedule,
        "multiproc": _cmd_multiproc,
        "verify": _cmd_verify,
    }[args.command]
    try:
        return handler(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry() -> None:
    sys.exit(main())


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _prepare_prefix(prefix: str) -> Path:
    out = Path(prefix)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _load_flow(args: argparse.Namespace) -> FlowGraph:
    graph = parse_flow_file(_read(args.flow))
    if getattr(args, "deadline", None) is not None:
        graph = replace(graph, deadline=args.deadline)
    if getattr(args, "confidence", None) is not None:
        graph = replace(graph, confidence=args.confidence)
    return graph


def _cmd_extract(args: argparse.Namespace) -> int:
    ir = parse_ir(_read(args.ir))
    lib = parse_fu_library(_read(args.fu))
    graph = extract_flow(ir, lib)
    out = _prepare_prefix(args.out)
    out.write_text(serialize_flow_file(graph), encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_estimate(args: argparse.Namespace) -> int:
    graph = _load_flow(args)
    report = analyze(graph, args.support_cap)
    out = _prepare_prefix(args.out)
    text = analysis_report_text(report)
    Path(f"{out}.report.txt").write_text(text, encoding="utf-8")
    write_pmf_csv(report.time, f"{out}.time.csv")
    write_pmf_csv(report.power, f"{out}.power.csv")
    if not args.no_plot:
        from .plots import save_pmf_figure

        save_pmf_figure(report.time, "completion time", f"{out}.time.png")
        save_pmf_figure(report.power, "power", f"{out}.power.png")
    print(text, end="")
    return EXIT_OK


def _require_deadline(graph: FlowGraph) -> float:
    if graph.deadline is None:
        raise ValueError("flow declares no deadline (use --deadline)")
    return graph.deadline


def _cmd_schedule(args: argparse.Namespace) -> int:
    graph = _load_flow(args)
    deadline = _require_deadline(graph)
    confidence = graph.confidence if graph.confidence is not None else 1.0
    levels = parse_levels_file(_read(args.levels))
    result = enumerate_assignments(
        graph, levels, deadline, confidence, support_cap=args.support_cap
    )
    out = _prepare_prefix(args.out)
    text = (
        f"deadline: {deadline:.12g}\n"
        f"confidence: {confidence:.12g}\n" + assignment_report_text(result)
    )
    Path(f"{out}.report.txt").write_text(text, encoding="utf-8")
    write_pmf_csv(result.best_report.power, f"{out}.best.power.csv")
    write_pmf_csv(result.worst_report.power, f"{out}.worst.power.csv")
    if not args.no_plot:
        from .plots import save_pmf_overlay

        save_pmf_overlay(
            [("best", result.best_report.power), ("worst", result.worst_report.power)],
            "power by voltage assignment",
            f"{out}.power.png",
        )
    print(text, end="")
    return EXIT_OK


def _cmd_multiproc(args: argparse.Namespace) -> int:
    graph = _load_flow(args)
    deadline = _require_deadline(graph)
    if graph.confidence is None:
        raise ValueError("flow declares no confidence (use --confidence)")
    levels = parse_levels_file(_read(args.levels))
    sched = multiproc_schedule(
        graph, deadline, graph.confidence, levels, args.max_procs,
        support_cap=args.support_cap,
    )
    out = _prepare_prefix(args.out)
    text = multiproc_report_text(sched, graph.confidence)
    Path(f"{out}.report.txt").write_text(text, encoding="utf-8")
    for i, power in enumerate(sched.per_lane_power, start=1):
        write_pmf_csv(power, f"{out}.p{i}.power.csv")
        if not args.no_plot:
            from .plots import save_pmf_figure

            save_pmf_figure(power, f"processor {i} power", f"{out}.p{i}.power.png")
    print(text, end="")
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    graph = _load_flow(args)
    report = analyze(graph, args.support_cap)
    root = flatten(graph)
    failures = []
    lines = []

    count = outcome_count(root)
    if count <= ENUMERATION_CAP:
        exact_time, exact_power = enumerate_exact(root)
        dev_time = pmf_max_deviation(report.time, exact_time)
        dev_power = pmf_max_deviation(report.power, exact_power)
        lines.append(
            f"exact: mean_time={expectation(exact_time):.12g} "
            f"mean_power={expectation(exact_power):.12g}"
        )
        lines.append(
            f"exact max point deviation: time={dev_time:.3e} power={dev_power:.3e}"
        )
        if dev_time > 1e-9 or dev_power > 1e-9:
            failures.append("exact enumeration deviates beyond 1e-9")
    else:
        lines.append(f"exact: skipped ({count} outcomes exceed {ENUMERATION_CAP})")

    sim = monte_carlo(graph, args.trials, args.seed)
    mc_time = expectation(sim.empirical_time)
    mc_power = expectation(sim.empirical_power)
    tol_time = max(4.0 * std_dev(report.time) / math.sqrt(args.trials), 1e-9)
    tol_power = max(4.0 * std_dev(report.power) / math.sqrt(args.trials), 1e-9)
    lines.append(
        f"analysis: mean_time={report.mean_time:.12g} mean_power={report.mean_power:.12g}"
    )
    lines.append(
        f"monte_carlo[{args.trials} trials, seed {args.seed}]: "
        f"mean_time={mc_time:.12g} mean_power={mc_power:.12g}"
    )
    lines.append(
        f"mc mean deviation: time={abs(mc_time - report.mean_time):.3e} "
        f"(tol {tol_time:.3e}) power={abs(mc_power - report.mean_power):.3e} "
        f"(tol {tol_power:.3e})"
    )
    if abs(mc_time - report.mean_time) > tol_time:
        failures.append("monte carlo time mean outside 4 standard errors")
    if abs(mc_power - report.mean_power) > tol_power:
        failures.append("monte carlo power mean outside 4 standard errors")

    if args.out:
        out = _prepare_prefix(args.out)
        write_pmf_csv(sim.empirical_time, f"{out}.mc.time.csv")
        write_pmf_csv(sim.empirical_power, f"{out}.mc.power.csv")

    print("\n".join(lines))
    if failures:
        for failure in failures:
            print(f"FAIL: {failure}")
        return EXIT_VERIFY
    print("OK")
    return EXIT_OK


if __name__ == "__main__":
    entry()
