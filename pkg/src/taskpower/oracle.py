"""Independent verification engines for the analytical path.

Nothing here is used by the analysis or scheduling code: these functions
recompute the same quantities by brute force so tests (and the `verify` CLI
verb) can cross-check the fast path against ground truth.

* :func:`enumerate_exact` walks every combination of branch choices and
  support values and builds the outcome space explicitly.
* :func:`monte_carlo` samples the graph trial by trial with a seeded,
  portable generator (numpy PCG64), so runs are reproducible anywhere.
* :func:`brute_force_voltage` redoes the exhaustive voltage search with
  naive nested recursion and its own scaling/selection logic.

The model composes the time and power of every node as independent
marginals: sequence power weights stages by expected duration, race power
mixes the contenders' power distributions by their probability of finishing
first (ties split evenly).  Both engines implement exactly those semantics
from their own primitives, enumerating or simulating the two marginals
separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

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
from .pmf import Pmf, Unit, cdf_at, expectation, make_pmf
from .scheduler import AssignmentResult, InfeasibleError, VoltageLevel

__all__ = [
    "SimResult",
    "brute_force_voltage",
    "enumerate_exact",
    "monte_carlo",
    "outcome_count",
    "pmf_max_deviation",
]

ENUMERATION_CAP = 10**6


def pmf_max_deviation(a: Pmf, b: Pmf, value_tol: float = 1e-9) -> float:
    """Largest per-point probability difference between two distributions.

    Support points of both inputs are clustered together when closer than
    `value_tol`, so values that differ only by float rounding compare as the
    same point; a point present in one input only contributes its full
    probability.
    """
    tagged = sorted(
        [(v, p, 0) for v, p in a.points] + [(v, p, 1) for v, p in b.points]
    )
    worst = 0.0
    i = 0
    while i < len(tagged):
        j = i
        sums = [0.0, 0.0]
        while j < len(tagged) and tagged[j][0] - tagged[i][0] <= value_tol:
            sums[tagged[j][2]] += tagged[j][1]
            j += 1
        worst = max(worst, abs(sums[0] - sums[1]))
        i = j
    return worst


@dataclass(frozen=True)
class SimResult:
    """Empirical distributions from a Monte Carlo run."""

    empirical_time: Pmf
    empirical_power: Pmf
    trials: int
    seed: int


# ---------------------------------------------------------------------------
# exact enumeration


def outcome_count(node: FlowNode) -> int:
    """Upper bound on the enumeration size for `node` (the larger of the
    time and power outcome counts)."""
    return max(_time_count(node), _power_count(node))


def _time_count(node: FlowNode) -> int:
    if isinstance(node, TaskNode):
        return len(node.time)
    if isinstance(node, (Sequence, AndGroup, Race)):
        return math.prod(_time_count(c) for c in node.children)
    if isinstance(node, Branch):
        return sum(_time_count(c) for _, c in node.arms)
    raise ValueError(f"unflattened subflow reference {node.name!r}")


def _power_count(node: FlowNode) -> int:
    if isinstance(node, TaskNode):
        return len(node.power)
    if isinstance(node, (Sequence, AndGroup)):
        return math.prod(_power_count(c) for c in node.children)
    if isinstance(node, Branch):
        return sum(_power_count(c) for _, c in node.arms)
    if isinstance(node, Race):
        # Win weights come from the joint time enumeration of the arms.
        joint = math.prod(_time_count(c) for c in node.children)
        return max(joint, sum(_power_count(c) for c in node.children))
    raise ValueError(f"unflattened subflow reference {node.name!r}")


def enumerate_exact(root: FlowNode) -> tuple[Pmf, Pmf]:
    """Ground-truth time and power distributions by explicit enumeration."""
    count = outcome_count(root)
    if count > ENUMERATION_CAP:
        raise ValueError(f"{count} outcomes exceed the cap of {ENUMERATION_CAP}")
    time = make_pmf(((t, w) for w, t in _time_outcomes(root)), Unit.CYCLES)
    power = make_pmf(((p, w) for w, p in _power_outcomes(root)), Unit.MICROWATTS)
    return time, power


def _time_outcomes(node: FlowNode) -> list[tuple[float, float]]:
    """All (weight, time) realizations of the subtree."""
    if isinstance(node, TaskNode):
        return [(p, t) for t, p in node.time.points]
    if isinstance(node, (Sequence, AndGroup, Race)):
        combine = {
            Sequence: lambda a, b: a + b,
            AndGroup: max,
            Race: min,
        }[type(node)]
        out = _time_outcomes(node.children[0])
        for child in node.children[1:]:
            part = _time_outcomes(child)
            out = [(w * pw, combine(t, pt)) for w, t in out for pw, pt in part]
        return out
    if isinstance(node, Branch):
        out = []
        for prob, child in node.arms:
            if prob == 0.0:
                continue
            out.extend((prob * w, t) for w, t in _time_outcomes(child))
        return out
    raise ValueError(f"unflattened subflow reference {node.name!r}")


def _power_outcomes(node: FlowNode) -> list[tuple[float, float]]:
    """All (weight, power) realizations of the subtree."""
    if isinstance(node, TaskNode):
        return [(pp, p) for p, pp in node.power.points]
    if isinstance(node, Sequence):
        means = [
            math.fsum(w * t for w, t in _time_outcomes(c)) for c in node.children
        ]
        total = math.fsum(means)
        if total <= 0.0:
            raise ValueError("sequence has zero total expected duration")
        out = [(1.0, 0.0)]
        for child, mean in zip(node.children, means):
            if mean == 0.0:
                continue
            share = mean / total
            part = _power_outcomes(child)
            out = [(w * pw, p + share * pp) for w, p in out for pw, pp in part]
        return out
    if isinstance(node, AndGroup):
        out = _power_outcomes(node.children[0])
        for child in node.children[1:]:
            part = _power_outcomes(child)
            out = [(w * pw, p + pp) for w, p in out for pw, pp in part]
        return out
    if isinstance(node, Branch):
        out = []
        for prob, child in node.arms:
            if prob == 0.0:
                continue
            out.extend((prob * w, p) for w, p in _power_outcomes(child))
        return out
    if isinstance(node, Race):
        wins = _race_wins([_time_outcomes(c) for c in node.children])
        out = []
        for weight, child in zip(wins, node.children):
            if weight == 0.0:
                continue
            out.extend((weight * w, p) for w, p in _power_outcomes(child))
        return out
    raise ValueError(f"unflattened subflow reference {node.name!r}")


def _race_wins(arm_times: list[list[tuple[float, float]]]) -> list[float]:
    """P(arm wins the race) by joint enumeration, splitting ties evenly."""
    wins = [0.0] * len(arm_times)
    joint = [((), 1.0)]
    for part in arm_times:
        joint = [(ts + (t,), w * pw) for ts, w in joint for pw, t in part]
    for times, w in joint:
        fastest = min(times)
        tied = [k for k, t in enumerate(times) if t == fastest]
        for k in tied:
            wins[k] += w / len(tied)
    return wins


# ---------------------------------------------------------------------------
# Monte Carlo simulation


def monte_carlo(g: FlowGraph, trials: int, seed: int) -> SimResult:
    """Simulate the graph `trials` times; deterministic for a fixed seed.

    Time and power are simulated as the independent marginal processes the
    calculus defines: the power pass redraws branch choices and race
    winners with fresh randomness.
    """
    if trials < 1:
        raise ValueError(f"trials {trials!r} must be >= 1")
    root = flatten(g)
    rng = np.random.default_rng(seed)
    times = _sample_time(root, trials, rng)
    powers = _sample_power(root, trials, rng)
    return SimResult(
        empirical_time=_empirical(times, trials, Unit.CYCLES),
        empirical_power=_empirical(powers, trials, Unit.MICROWATTS),
        trials=trials,
        seed=seed,
    )


def _empirical(samples: np.ndarray, trials: int, unit: Unit) -> Pmf:
    values, counts = np.unique(samples, return_counts=True)
    return make_pmf(zip(values.tolist(), (counts / trials).tolist()), unit)


def _draw(p: Pmf, trials: int, rng: np.random.Generator) -> np.ndarray:
    idx = rng.choice(len(p), size=trials, p=np.asarray(p.probs) / math.fsum(p.probs))
    return np.asarray(p.values)[idx]


def _pick_race_winner(
    tstack: np.ndarray, trials: int, rng: np.random.Generator
) -> np.ndarray:
    """Index of the fastest arm per trial, ties broken uniformly."""
    fastest = tstack.min(axis=0)
    tied = tstack == fastest
    counts = tied.sum(axis=0)
    pick = np.minimum((rng.random(trials) * counts).astype(int), counts - 1)
    return np.argmax(np.cumsum(tied, axis=0) > pick, axis=0)


def _sample_time(node: FlowNode, trials: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(node, TaskNode):
        return _draw(node.time, trials, rng)
    if isinstance(node, Sequence):
        return np.sum([_sample_time(c, trials, rng) for c in node.children], axis=0)
    if isinstance(node, AndGroup):
        return np.max([_sample_time(c, trials, rng) for c in node.children], axis=0)
    if isinstance(node, Race):
        return np.min([_sample_time(c, trials, rng) for c in node.children], axis=0)
    if isinstance(node, Branch):
        probs = np.array([p for p, _ in node.arms])
        pick = rng.choice(len(node.arms), size=trials, p=probs / probs.sum())
        tstack = np.stack([_sample_time(c, trials, rng) for _, c in node.arms])
        return tstack[pick, np.arange(trials)]
    raise ValueError(f"unflattened subflow reference {node.name!r}")


def _sample_power(node: FlowNode, trials: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(node, TaskNode):
        return _draw(node.power, trials, rng)
    if isinstance(node, Sequence):
        means = [expectation(time_pmf(c, None)) for c in node.children]
        total = math.fsum(means)
        if total <= 0.0:
            raise ValueError("sequence has zero total expected duration")
        parts = [
            (m / total) * _sample_power(c, trials, rng)
            for c, m in zip(node.children, means)
            if m > 0.0
        ]
        return np.sum(parts, axis=0)
    if isinstance(node, AndGroup):
        return np.sum([_sample_power(c, trials, rng) for c in node.children], axis=0)
    if isinstance(node, Race):
        tstack = np.stack([_sample_time(c, trials, rng) for c in node.children])
        winner = _pick_race_winner(tstack, trials, rng)
        pstack = np.stack([_sample_power(c, trials, rng) for c in node.children])
        return pstack[winner, np.arange(trials)]
    if isinstance(node, Branch):
        probs = np.array([p for p, _ in node.arms])
        pick = rng.choice(len(node.arms), size=trials, p=probs / probs.sum())
        pstack = np.stack([_sample_power(c, trials, rng) for _, c in node.arms])
        return pstack[pick, np.arange(trials)]
    raise ValueError(f"unflattened subflow reference {node.name!r}")


# ---------------------------------------------------------------------------
# brute-force voltage search


def brute_force_voltage(
    g: FlowGraph,
    levels: list[VoltageLevel],
    deadline: float,
    confidence: float = 1.0,
    support_cap: int | None = None,
) -> AssignmentResult:
    """Re-run the exhaustive voltage search with naive nested recursion.

    Shares only the Pmf calculus with the scheduler (that layer is
    cross-checked by enumerate_exact); scaling, feasibility, selection and
    slowdown counting are re-derived here.
    """
    ordered = sorted(levels, key=lambda l: (l.voltage, l.name))
    refs = [l for l in ordered if l.v_scale == 1.0 and l.f_scale == 1.0]
    if len(refs) != 1:
        raise ValueError("exactly one reference level required")
    reference = refs[0]
    root = flatten(g)
    scalable = sorted((t.id for t in iter_tasks(root) if t.scalable))
    if len(scalable) > 16:
        raise ValueError("brute force is limited to 16 scalable tasks")

    feasible: list[tuple[float, float, tuple[int, ...]]] = []

    def explore(prefix: tuple[int, ...]) -> None:
        if len(prefix) < len(scalable):
            for i in range(len(ordered)):
                explore(prefix + (i,))
            return
        scaled = _rescale(root, dict(zip(scalable, prefix)), ordered)
        t = time_pmf(scaled, support_cap)
        if cdf_at(t, deadline) + 1e-9 < confidence:
            return
        p = power_pmf(scaled, support_cap)
        feasible.append((expectation(p), expectation(t), prefix))

    explore(())
    if not feasible:
        raise InfeasibleError(
            f"no voltage assignment meets deadline {deadline:g} at confidence {confidence:g}"
        )

    best = feasible[0]
    for cand in feasible[1:]:
        if (cand[0], cand[2]) < (best[0], best[2]):
            best = cand
    worst = feasible[0]
    for cand in feasible[1:]:
        if (cand[1], -cand[0], cand[2]) < (worst[1], -worst[0], worst[2]):
            worst = cand

    all_ids = [t.id for t in iter_tasks(root)]
    best_map = {t: reference.name for t in all_ids}
    worst_map = {t: reference.name for t in all_ids}
    for task_id, i in zip(scalable, best[2]):
        best_map[task_id] = ordered[i].name
    for task_id, i in zip(scalable, worst[2]):
        worst_map[task_id] = ordered[i].name

    cycles = {t.id: t.cycles for t in iter_tasks(root)}
    sn = sum(
        cycles[t]
        for t in best_map
        if best_map[t] != reference.name and worst_map[t] == reference.name
    )
    v_l = min(l.voltage for l in ordered)
    theoretical = (
        sn * (reference.voltage**2 - v_l**2) if reference.voltage > v_l else 0.0
    )

    def report(choice: tuple[int, ...]) -> AnalysisReport:
        scaled = _rescale(root, dict(zip(scalable, choice)), ordered)
        graph = FlowGraph(flows={"main": scaled}, entry="main",
                          deadline=deadline, confidence=confidence)
        return analyze(graph, support_cap)

    best_report = report(best[2])
    worst_report = report(worst[2])
    return AssignmentResult(
        best=best_map,
        worst=worst_map,
        best_report=best_report,
        worst_report=worst_report,
        slowdown_cycles=sn,
        savings_estimated=worst_report.mean_power - best_report.mean_power,
        savings_theoretical=theoretical,
        feasible_count=len(feasible),
    )


def _rescale(
    root: FlowNode, choice: dict[str, int], levels: list[VoltageLevel]
) -> FlowNode:
    def apply(task: TaskNode) -> TaskNode:
        if task.id not in choice:
            return task
        level = levels[choice[task.id]]
        e = level.v_scale * level.v_scale * level.f_scale
        d = level.f_scale / level.v_scale
        return TaskNode(
            id=task.id,
            time=Pmf(tuple(v * d for v in task.time.values), task.time.probs, Unit.CYCLES),
            power=Pmf(tuple(v * e for v in task.power.values), task.power.probs, Unit.MICROWATTS),
            cycles=task.cycles,
            scalable=task.scalable,
            label=task.label,
        )

    return map_tasks(root, apply)
