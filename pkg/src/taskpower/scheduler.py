"""Voltage selection and deadline-constrained scheduling.

Two decision procedures live here.  The first explores every assignment of
voltage levels to scalable tasks, keeps the ones whose completion-time
distribution meets the deadline at the required confidence, and reports the
energy-optimal (best) and fastest/most power-hungry (worst) assignments plus
the slowdown-cycle count and both energy-savings figures.  The second packs
the task set onto the smallest number of processors that achieves the
required confidence, using latest-finish-time list scheduling, then runs the
voltage search per processor lane.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence as Seq

from .analysis import AnalysisReport, analyze, power_pmf, time_pmf
from .flowgraph import (
    AndGroup,
    Branch,
    FlowGraph,
    FlowNode,
    Race,
    Sequence,
    TaskNode,
    flatten,
    iter_tasks,
    map_tasks,
)
from .pmf import (
    DEFAULT_SUPPORT_CAP,
    Pmf,
    Unit,
    cdf_at,
    convolve_sum,
    delta,
    expectation,
    max_pmf,
    rebin,
    scale,
)

__all__ = [
    "AssignmentResult",
    "InfeasibleError",
    "MultiprocSchedule",
    "VoltageLevel",
    "edf_order",
    "energy_savings_theoretical",
    "enumerate_assignments",
    "latest_finish_times",
    "min_processors",
    "multiproc_schedule",
    "parse_levels_file",
    "scale_task",
    "slowdown_cycles",
]

#: Exhaustive search guard: at most this many scalable tasks.
DEFAULT_ASSIGNMENT_CAP = 24

#: Slack absorbing float rounding in probability comparisons.
_CDF_SLACK = 1e-9


class InfeasibleError(RuntimeError):
    """No assignment or processor count satisfies the timing requirement."""


@dataclass(frozen=True)
class VoltageLevel:
    """One processor operating point.

    `voltage` feeds the theoretical-savings formula; `v_scale`/`f_scale` are
    the knobs applied to task energy (v_scale^2 * f_scale) and delay
    (f_scale / v_scale).  The level with both scales at 1 is the reference.
    """

    name: str
    voltage: float
    v_scale: float
    f_scale: float

    def __post_init__(self) -> None:
        if self.voltage <= 0:
            raise ValueError(f"level {self.name!r}: voltage must be > 0")
        if not (0.0 < self.v_scale <= 1.0) or not (0.0 < self.f_scale <= 1.0):
            raise ValueError(f"level {self.name!r}: scales must be in (0, 1]")

    @property
    def is_reference(self) -> bool:
        return self.v_scale == 1.0 and self.f_scale == 1.0


@dataclass(frozen=True)
class AssignmentResult:
    """Outcome of the exhaustive voltage search."""

    best: dict[str, str]
    worst: dict[str, str]
    best_report: AnalysisReport
    worst_report: AnalysisReport
    slowdown_cycles: int
    savings_estimated: float
    savings_theoretical: float
    feasible_count: int


@dataclass(frozen=True)
class MultiprocSchedule:
    """Lane-per-processor schedule with the analytical makespan."""

    processor_count: int
    lanes: tuple[tuple[tuple[str, float, float], ...], ...]
    per_lane_power: tuple[Pmf, ...]
    makespan: Pmf
    confidence: float
    lane_results: tuple[AssignmentResult | None, ...]
    deadline: float


def scale_task(t: TaskNode, level: VoltageLevel) -> TaskNode:
    """Apply a voltage level to one task.

    Energy scales by v_scale^2 * f_scale and delay by f_scale / v_scale;
    the nominal cycle count is frequency-independent and stays put.
    """
    if level.is_reference:
        return t
    if not t.scalable:
        raise ValueError(f"task {t.id!r} is not scalable")
    energy_factor = level.v_scale * level.v_scale * level.f_scale
    delay_factor = level.f_scale / level.v_scale
    return TaskNode(
        id=t.id,
        time=scale(t.time, delay_factor),
        power=scale(t.power, energy_factor),
        cycles=t.cycles,
        scalable=t.scalable,
        label=t.label,
    )


def latest_finish_times(
    g: FlowGraph | FlowNode,
    deadline: float,
    support_cap: int | None = DEFAULT_SUPPORT_CAP,
) -> dict[str, float]:
    """Latest finish time per task: the deadline minus the expected time of
    everything that still has to run afterwards."""
    if deadline <= 0 or not math.isfinite(deadline):
        raise ValueError(f"deadline {deadline!r} must be > 0")
    root = flatten(g) if isinstance(g, FlowGraph) else g
    out: dict[str, float] = {}

    def walk(node: FlowNode, rem_after: float) -> None:
        if isinstance(node, TaskNode):
            out[node.id] = deadline - rem_after
        elif isinstance(node, Sequence):
            remaining = rem_after
            suffix: list[float] = []
            for child in reversed(node.children):
                suffix.append(remaining)
                remaining += expectation(time_pmf(child, support_cap))
            for child, rem in zip(node.children, reversed(suffix)):
                walk(child, rem)
        elif isinstance(node, (AndGroup, Race)):
            for child in node.children:
                walk(child, rem_after)
        elif isinstance(node, Branch):
            for _, child in node.arms:
                walk(child, rem_after)
        else:
            raise ValueError(f"unflattened subflow reference {node.name!r}")

    walk(root, 0.0)
    return out


def edf_order(deadlines: Mapping[str, float]) -> list[str]:
    """Earliest-deadline-first order; ties fall back to the task id."""
    return sorted(deadlines, key=lambda t: (deadlines[t], t))


def slowdown_cycles(
    best: Mapping[str, str],
    worst: Mapping[str, str],
    g: FlowGraph | FlowNode,
    levels: Iterable[VoltageLevel],
) -> int:
    """Total nominal cycles run slow in `best` but at full speed in `worst`."""
    if set(best) != set(worst):
        raise ValueError("assignments cover different task sets")
    ref = _reference_level(list(levels)).name
    root = flatten(g) if isinstance(g, FlowGraph) else g
    cycles = {t.id: t.cycles for t in iter_tasks(root)}
    missing = set(best) - set(cycles)
    if missing:
        raise ValueError(f"assignment names unknown tasks: {sorted(missing)}")
    return sum(
        cycles[t] for t in best if best[t] != ref and worst[t] == ref
    )


def energy_savings_theoretical(sn: int, v_h: float, v_l: float) -> float:
    """Savings from running `sn` cycles at the low voltage: sn*(v_h^2 - v_l^2)."""
    if not (v_h > v_l > 0):
        raise ValueError(f"need v_h > v_l > 0, got v_h={v_h!r} v_l={v_l!r}")
    if sn < 0:
        raise ValueError(f"slowdown cycles {sn!r} must be >= 0")
    return sn * (v_h * v_h - v_l * v_l)


def min_processors(total_time: float, deadline: float) -> int:
    """Lower bound on the processor count: ceil(total work / deadline)."""
    if total_time <= 0 or deadline <= 0:
        raise ValueError("total_time and deadline must be > 0")
    return max(1, math.ceil(total_time / deadline))


def _reference_level(levels: Seq[VoltageLevel]) -> VoltageLevel:
    refs = [l for l in levels if l.is_reference]
    if len(refs) != 1:
        raise ValueError(
            f"exactly one reference level (v_scale=1, f_scale=1) required, found {len(refs)}"
        )
    return refs[0]


def _level_order(levels: Seq[VoltageLevel]) -> list[VoltageLevel]:
    # Lower voltage sorts first; this is the order used for lexicographic
    # tie-breaking of otherwise equal assignments.
    return sorted(levels, key=lambda l: (l.voltage, l.name))


def enumerate_assignments(
    g: FlowGraph,
    levels: Seq[VoltageLevel],
    deadline: float,
    confidence: float = 1.0,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
    support_cap: int | None = DEFAULT_SUPPORT_CAP,
) -> AssignmentResult:
    """Exhaustive voltage search over every scalable task.

    A candidate is feasible when the probability of finishing by `deadline`
    is at least `confidence` (default 1.0: a hard deadline).  Among feasible
    candidates, `best` minimizes mean power and `worst` minimizes mean
    completion time (ties prefer higher power, then the lexicographically
    smallest assignment with lower levels first).
    """
    if deadline <= 0 or not math.isfinite(deadline):
        raise ValueError(f"deadline {deadline!r} must be > 0")
    if not (0.0 < confidence <= 1.0):
        raise ValueError(f"confidence {confidence!r} must be in (0, 1]")
    ordered = _level_order(levels)
    reference = _reference_level(ordered)
    if len(ordered) < 2:
        raise ValueError("need at least two voltage levels")
    root = flatten(g)
    scalable = sorted((t for t in iter_tasks(root) if t.scalable), key=lambda t: t.id)
    n = len(scalable)
    if n > assignment_cap:
        raise ValueError(
            f"{n} scalable tasks exceed the exhaustive-search cap of {assignment_cap}"
        )

    best_key: tuple | None = None
    best_choice: tuple[int, ...] | None = None
    worst_key: tuple | None = None
    worst_choice: tuple[int, ...] | None = None
    feasible_count = 0

    for choice in itertools.product(range(len(ordered)), repeat=n):
        scaled = _apply_choice(root, scalable, ordered, choice)
        t = time_pmf(scaled, support_cap)
        if cdf_at(t, deadline) + _CDF_SLACK < confidence:
            continue
        feasible_count += 1
        mean_time = expectation(t)
        mean_power = expectation(power_pmf(scaled, support_cap))
        bkey = (mean_power,) + choice
        wkey = (mean_time, -mean_power) + choice
        if best_key is None or bkey < best_key:
            best_key, best_choice = bkey, choice
        if worst_key is None or wkey < worst_key:
            worst_key, worst_choice = wkey, choice

    if best_choice is None:
        raise InfeasibleError(
            f"no voltage assignment meets deadline {deadline:g} at confidence {confidence:g}"
        )

    best = _assignment_map(root, scalable, ordered, best_choice, reference)
    worst = _assignment_map(root, scalable, ordered, worst_choice, reference)
    best_report = _scaled_report(g, root, scalable, ordered, best_choice,
                                 deadline, confidence, support_cap)
    worst_report = _scaled_report(g, root, scalable, ordered, worst_choice,
                                  deadline, confidence, support_cap)
    sn = slowdown_cycles(best, worst, root, ordered)
    v_l = min(l.voltage for l in ordered)
    theoretical = (
        energy_savings_theoretical(sn, reference.voltage, v_l)
        if reference.voltage > v_l
        else 0.0
    )
    return AssignmentResult(
        best=best,
        worst=worst,
        best_report=best_report,
        worst_report=worst_report,
        slowdown_cycles=sn,
        savings_estimated=worst_report.mean_power - best_report.mean_power,
        savings_theoretical=theoretical,
        feasible_count=feasible_count,
    )


def _apply_choice(
    root: FlowNode,
    scalable: Seq[TaskNode],
    levels: Seq[VoltageLevel],
    choice: tuple[int, ...],
) -> FlowNode:
    by_id = {t.id: levels[i] for t, i in zip(scalable, choice)}

    def apply(task: TaskNode) -> TaskNode:
        level = by_id.get(task.id)
        return task if level is None else scale_task(task, level)

    return map_tasks(root, apply)


def _assignment_map(
    root: FlowNode,
    scalable: Seq[TaskNode],
    levels: Seq[VoltageLevel],
    choice: tuple[int, ...],
    reference: VoltageLevel,
) -> dict[str, str]:
    out = {t.id: reference.name for t in iter_tasks(root)}
    for task, i in zip(scalable, choice):
        out[task.id] = levels[i].name
    return out


def _scaled_report(
    g: FlowGraph,
    root: FlowNode,
    scalable: Seq[TaskNode],
    levels: Seq[VoltageLevel],
    choice: tuple[int, ...],
    deadline: float,
    confidence: float,
    support_cap: int | None,
) -> AnalysisReport:
    scaled = _apply_choice(root, scalable, levels, choice)
    scaled_graph = FlowGraph(
        flows={"main": scaled}, entry="main", deadline=deadline, confidence=confidence
    )
    return analyze(scaled_graph, support_cap)


# ---------------------------------------------------------------------------
# multiprocessor scheduling


def _precedence(root: FlowNode) -> tuple[list[TaskNode], set[tuple[str, str]]]:
    """Task list plus the dependence edges implied by the composition tree.

    Sequences order all tasks of one child before the next child's; the
    concurrent constructs (and/race) and branch arms impose no cross edges.
    """
    edges: set[tuple[str, str]] = set()

    def walk(node: FlowNode) -> tuple[list[TaskNode], list[str], list[str]]:
        if isinstance(node, TaskNode):
            return [node], [node.id], [node.id]
        if isinstance(node, Sequence):
            tasks: list[TaskNode] = []
            sources: list[str] = []
            prev_sinks: list[str] = []
            sinks: list[str] = []
            for i, child in enumerate(node.children):
                ct, cs, ck = walk(child)
                tasks.extend(ct)
                if i == 0:
                    sources = cs
                else:
                    edges.update((u, v) for u in prev_sinks for v in cs)
                prev_sinks = ck
                sinks = ck
            return tasks, sources, sinks
        if isinstance(node, (AndGroup, Race)):
            children = node.children
        elif isinstance(node, Branch):
            children = tuple(c for _, c in node.arms)
        else:
            raise ValueError(f"unflattened subflow reference {node.name!r}")
        tasks, sources, sinks = [], [], []
        for child in children:
            ct, cs, ck = walk(child)
            tasks.extend(ct)
            sources.extend(cs)
            sinks.extend(ck)
        return tasks, sources, sinks

    tasks, _, _ = walk(root)
    return tasks, edges


def _list_schedule(
    tasks: Seq[TaskNode],
    edges: set[tuple[str, str]],
    durations: Mapping[str, float],
    priority: Mapping[str, float],
    processors: int,
) -> list[list[tuple[str, float, float]]]:
    """Static list scheduling: most urgent ready task first, placed where it
    can start earliest (ties to the lowest lane index)."""
    preds: dict[str, set[str]] = {t.id: set() for t in tasks}
    for u, v in edges:
        preds[v].add(u)
    finish: dict[str, float] = {}
    lanes: list[list[tuple[str, float, float]]] = [[] for _ in range(processors)]
    avail = [0.0] * processors
    pending = {t.id for t in tasks}

    while pending:
        ready = [t for t in pending if preds[t] <= finish.keys()]
        task = min(ready, key=lambda t: (priority[t], t))
        ready_at = max((finish[u] for u in preds[task]), default=0.0)
        lane = min(range(processors), key=lambda i: (max(avail[i], ready_at), i))
        start = max(avail[lane], ready_at)
        end = start + durations[task]
        lanes[lane].append((task, start, end))
        avail[lane] = end
        finish[task] = end
        pending.remove(task)
    return lanes


def multiproc_schedule(
    g: FlowGraph,
    deadline: float,
    confidence: float,
    levels: Seq[VoltageLevel],
    max_processors: int,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
    support_cap: int | None = DEFAULT_SUPPORT_CAP,
) -> MultiprocSchedule:
    """Schedule the task set on the fewest processors meeting the deadline
    at the required confidence, then voltage-optimize each lane.

    Starts from the ceil(total work / deadline) lower bound and adds
    processors while the analytical makespan distribution misses the
    confidence target.
    """
    if deadline <= 0 or not math.isfinite(deadline):
        raise ValueError(f"deadline {deadline!r} must be > 0")
    if not (0.0 < confidence <= 1.0):
        raise ValueError(f"confidence {confidence!r} must be in (0, 1]")
    if max_processors < 1:
        raise ValueError(f"max_processors {max_processors!r} must be >= 1")

    root = flatten(g)
    tasks, edges = _precedence(root)
    durations = {t.id: expectation(t.time) for t in tasks}
    times = {t.id: t.time for t in tasks}
    priority = latest_finish_times(root, deadline, support_cap)
    total = math.fsum(durations.values())
    start_p = min_processors(total, deadline) if total > 0 else 1
    if start_p > max_processors:
        raise InfeasibleError(
            f"lower bound of {start_p} processors exceeds the limit of {max_processors}"
        )

    for p in range(start_p, max_processors + 1):
        lanes = _list_schedule(tasks, edges, durations, priority, p)
        makespan = _makespan_pmf(lanes, times, support_cap)
        achieved = cdf_at(makespan, deadline)
        if achieved + _CDF_SLACK >= confidence:
            return _finish_schedule(
                g, lanes, makespan, achieved, deadline, confidence,
                levels, tasks, assignment_cap, support_cap,
            )
    raise InfeasibleError(
        f"no processor count up to {max_processors} reaches confidence {confidence:g}"
    )


def _makespan_pmf(
    lanes: Seq[Seq[tuple[str, float, float]]],
    times: Mapping[str, Pmf],
    support_cap: int | None,
) -> Pmf:
    lane_pmfs = []
    for lane in lanes:
        if not lane:
            continue
        out = times[lane[0][0]]
        for task, _, _ in lane[1:]:
            out = convolve_sum(out, times[task], support_cap)
        lane_pmfs.append(out)
    makespan = lane_pmfs[0]
    for p in lane_pmfs[1:]:
        makespan = max_pmf(makespan, p)
        if support_cap is not None:
            makespan = rebin(makespan, support_cap)
    return makespan


def _finish_schedule(
    g: FlowGraph,
    lanes: list[list[tuple[str, float, float]]],
    makespan: Pmf,
    achieved: float,
    deadline: float,
    confidence: float,
    levels: Seq[VoltageLevel],
    tasks: Seq[TaskNode],
    assignment_cap: int,
    support_cap: int | None,
) -> MultiprocSchedule:
    by_id = {t.id: t for t in tasks}
    lane_results: list[AssignmentResult | None] = []
    lane_powers: list[Pmf] = []
    for lane in lanes:
        if not lane:
            lane_results.append(None)
            lane_powers.append(delta(0.0, Unit.MICROWATTS))
            continue
        chain = Sequence(tuple(by_id[task] for task, _, _ in lane))
        lane_graph = FlowGraph(
            flows={"lane": chain}, entry="lane",
            deadline=deadline, confidence=confidence,
        )
        result = enumerate_assignments(
            lane_graph, levels, deadline, confidence, assignment_cap, support_cap
        )
        lane_results.append(result)
        lane_powers.append(result.best_report.power)
    return MultiprocSchedule(
        processor_count=len(lanes),
        lanes=tuple(tuple(lane) for lane in lanes),
        per_lane_power=tuple(lane_powers),
        makespan=makespan,
        confidence=achieved,
        lane_results=tuple(lane_results),
        deadline=deadline,
    )


# ---------------------------------------------------------------------------
# voltage-levels file

_LEVEL_RE = re.compile(
    r"^level\s+(?P<name>\S+)\s+voltage=(?P<voltage>[0-9.eE+-]+)"
    r"\s+v_scale=(?P<v>[0-9.eE+-]+)\s+f_scale=(?P<f>[0-9.eE+-]+)\s*$"
)


def parse_levels_file(text: str) -> list[VoltageLevel]:
    """Parse `level NAME voltage=V v_scale=X f_scale=Y` lines."""
    levels: list[VoltageLevel] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LEVEL_RE.match(line)
        if m is None:
            raise ValueError(f"line {lineno}: bad level line {raw.strip()!r}")
        if m.group("name") in seen:
            raise ValueError(f"line {lineno}: duplicate level {m.group('name')!r}")
        seen.add(m.group("name"))
        try:
            levels.append(
                VoltageLevel(
                    name=m.group("name"),
                    voltage=float(m.group("voltage")),
                    v_scale=float(m.group("v")),
                    f_scale=float(m.group("f")),
                )
            )
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    if not levels:
        raise ValueError("no voltage levels defined")
    return levels
