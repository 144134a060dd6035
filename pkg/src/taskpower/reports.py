"""Text report and CSV plot-data serialization.

Every distribution is exported as a two-column `value,probability` CSV so
estimates, schedules and Monte Carlo runs can be diffed and plotted with the
same tooling.  All output is deterministic for identical inputs.
"""

from __future__ import annotations

from pathlib import Path

from .analysis import AnalysisReport
from .pmf import Pmf
from .scheduler import AssignmentResult, MultiprocSchedule

__all__ = [
    "analysis_report_text",
    "assignment_report_text",
    "multiproc_report_text",
    "pmf_csv_text",
    "write_pmf_csv",
]


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def pmf_csv_text(p: Pmf) -> str:
    lines = ["value,probability"]
    lines.extend(f"{v!r},{prob!r}" for v, prob in p.points)
    return "\n".join(lines) + "\n"


def write_pmf_csv(p: Pmf, path: str | Path) -> None:
    Path(path).write_text(pmf_csv_text(p), encoding="utf-8")


def analysis_report_text(report: AnalysisReport) -> str:
    lines = [
        f"mean_time: {_fmt(report.mean_time)}",
        f"mean_power: {_fmt(report.mean_power)}",
        f"std_power: {_fmt(report.std_power)}",
        f"most_probable_power: {_fmt(report.most_probable_power)}",
        f"time_points: {len(report.time)}",
        f"power_points: {len(report.power)}",
    ]
    if report.deadline is not None:
        lines.append(f"deadline: {_fmt(report.deadline)}")
        lines.append(f"confidence_at_deadline: {_fmt(report.confidence_at_deadline)}")
    return "\n".join(lines) + "\n"


def _assignment_lines(name: str, assignment: dict[str, str]) -> list[str]:
    lines = [f"{name}:"]
    lines.extend(f"  {task}: {level}" for task, level in sorted(assignment.items()))
    return lines


def assignment_report_text(result: AssignmentResult) -> str:
    lines = [
        f"feasible_assignments: {result.feasible_count}",
        f"slowdown_cycles: {result.slowdown_cycles}",
        f"savings_estimated: {_fmt(result.savings_estimated)}",
        f"savings_theoretical: {_fmt(result.savings_theoretical)}",
        f"best_mean_power: {_fmt(result.best_report.mean_power)}",
        f"worst_mean_power: {_fmt(result.worst_report.mean_power)}",
        f"best_mean_time: {_fmt(result.best_report.mean_time)}",
        f"worst_mean_time: {_fmt(result.worst_report.mean_time)}",
    ]
    if result.best_report.confidence_at_deadline is not None:
        lines.append(
            f"best_confidence: {_fmt(result.best_report.confidence_at_deadline)}"
        )
        lines.append(
            f"worst_confidence: {_fmt(result.worst_report.confidence_at_deadline)}"
        )
    lines.extend(_assignment_lines("best_assignment", result.best))
    lines.extend(_assignment_lines("worst_assignment", result.worst))
    return "\n".join(lines) + "\n"


def multiproc_report_text(sched: MultiprocSchedule, required_confidence: float) -> str:
    lines = [
        f"processors: {sched.processor_count}",
        f"deadline: {_fmt(sched.deadline)}",
        f"confidence_required: {_fmt(required_confidence)}",
        f"confidence_achieved: {_fmt(sched.confidence)}",
        f"makespan_points: {len(sched.makespan)}",
    ]
    total_sn = sum(r.slowdown_cycles for r in sched.lane_results if r is not None)
    total_est = sum(r.savings_estimated for r in sched.lane_results if r is not None)
    total_theory = sum(r.savings_theoretical for r in sched.lane_results if r is not None)
    lines.append(f"total_slowdown_cycles: {total_sn}")
    lines.append(f"total_savings_estimated: {_fmt(total_est)}")
    lines.append(f"total_savings_theoretical: {_fmt(total_theory)}")
    for i, lane in enumerate(sched.lanes, start=1):
        result = sched.lane_results[i - 1]
        lines.append(f"lane {i}: {len(lane)} tasks")
        assignment = result.best if result is not None else {}
        for task, start, finish in lane:
            level = assignment.get(task, "-")
            lines.append(
                f"  {task} start={_fmt(start)} finish={_fmt(finish)} level={level}"
            )
        if result is not None:
            lines.append(f"  slowdown_cycles: {result.slowdown_cycles}")
            lines.append(f"  savings_estimated: {_fmt(result.savings_estimated)}")
            lines.append(
                f"  savings_theoretical: {_fmt(result.savings_theoretical)}"
            )
            lines.append(
                f"  mean_power_best: {_fmt(result.best_report.mean_power)}"
            )
    return "\n".join(lines) + "\n"
