"""Analytical composition of whole-graph time and power distributions.

Time composes structurally: sequences convolve, all-must-finish groups take
the max, races take the min, probabilistic branches mix.  Power composes with
different rules: concurrent powers add, branch powers mix, sequential power
is the duration-weighted average of the stage powers (each stage weighted by
its share of the expected total duration), and race power mixes the
contenders by their probability of winning.

All functions are pure; a support cap bounds the blow-up of repeated
convolution via expectation-preserving rebinning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .flowgraph import (
    AndGroup,
    Branch,
    FlowGraph,
    FlowNode,
    Race,
    Sequence,
    TaskNode,
    flatten,
    validate,
)
from .pmf import (
    DEFAULT_SUPPORT_CAP,
    Pmf,
    cdf_at,
    convolve_sum,
    expectation,
    max_pmf,
    min_pmf,
    mixture,
    most_probable,
    rebin,
    scale,
    std_dev,
)

__all__ = [
    "AnalysisError",
    "AnalysisReport",
    "analyze",
    "branch_probs_from_profile",
    "power_pmf",
    "time_pmf",
]


class AnalysisError(ValueError):
    """Raised when a validated graph still cannot be analyzed (for example a
    sequence whose total expected duration is zero)."""


@dataclass(frozen=True)
class AnalysisReport:
    """Full time/power distributions plus the summary statistics."""

    time: Pmf
    power: Pmf
    mean_time: float
    mean_power: float
    std_power: float
    most_probable_power: float
    confidence_at_deadline: float | None
    deadline: float | None


def time_pmf(root: FlowNode, cap: int | None = DEFAULT_SUPPORT_CAP) -> Pmf:
    """Completion-time distribution of a flattened tree."""
    if isinstance(root, TaskNode):
        return root.time
    if isinstance(root, Sequence):
        out = time_pmf(root.children[0], cap)
        for child in root.children[1:]:
            out = convolve_sum(out, time_pmf(child, cap), cap)
        return out
    if isinstance(root, AndGroup):
        return _fold(max_pmf, [time_pmf(c, cap) for c in root.children], cap)
    if isinstance(root, Race):
        return _fold(min_pmf, [time_pmf(c, cap) for c in root.children], cap)
    if isinstance(root, Branch):
        mixed = mixture([(p, time_pmf(c, cap)) for p, c in root.arms])
        return mixed if cap is None else rebin(mixed, cap)
    raise AnalysisError(f"cannot analyze unflattened node {root!r}")


def power_pmf(root: FlowNode, cap: int | None = DEFAULT_SUPPORT_CAP) -> Pmf:
    """Power distribution of a flattened tree.

    Concurrent groups add their children's powers; a sequence contributes
    each stage's power weighted by that stage's share of the expected total
    duration (equal durations reduce to a plain 1/n average); a race mixes
    arm powers by win probability, with ties split evenly.
    """
    if isinstance(root, TaskNode):
        return root.power
    if isinstance(root, AndGroup):
        out = power_pmf(root.children[0], cap)
        for child in root.children[1:]:
            out = convolve_sum(out, power_pmf(child, cap), cap)
        return out
    if isinstance(root, Branch):
        mixed = mixture([(p, power_pmf(c, cap)) for p, c in root.arms])
        return mixed if cap is None else rebin(mixed, cap)
    if isinstance(root, Sequence):
        durations = [expectation(time_pmf(c, cap)) for c in root.children]
        total = math.fsum(durations)
        if total <= 0.0:
            raise AnalysisError("sequence has zero total expected duration")
        out = None
        for child, duration in zip(root.children, durations):
            if duration == 0.0:
                continue
            part = scale(power_pmf(child, cap), duration / total)
            out = part if out is None else convolve_sum(out, part, cap)
        return out
    if isinstance(root, Race):
        times = [time_pmf(c, cap) for c in root.children]
        weights = _race_win_probabilities(times)
        mixed = mixture(
            [(w, power_pmf(c, cap)) for w, c in zip(weights, root.children)]
        )
        return mixed if cap is None else rebin(mixed, cap)
    raise AnalysisError(f"cannot analyze unflattened node {root!r}")


def _fold(op, parts: list[Pmf], cap: int | None) -> Pmf:
    out = parts[0]
    for part in parts[1:]:
        out = op(out, part)
        if cap is not None:
            out = rebin(out, cap)
    return out


def _race_win_probabilities(times: list[Pmf]) -> list[float]:
    """P(arm k finishes first), splitting ties evenly among the tied arms.

    For each support value v of arm k we need the probability that every
    other arm takes at least v, discounted by 1/(1+m) when m of them tie at
    exactly v.  The tie-count distribution is built arm by arm.
    """
    tables = [dict(p.points) for p in times]
    weights = []
    for k, p in enumerate(times):
        win = 0.0
        for v, prob in p.points:
            ties = [1.0]  # ties[m] = P(m others tied at v, rest strictly later)
            for j, q in enumerate(times):
                if j == k:
                    continue
                at = tables[j].get(v, 0.0)
                above = 1.0 - cdf_at(q, v)
                ties = [
                    (ties[m] if m < len(ties) else 0.0) * above
                    + (ties[m - 1] * at if m >= 1 else 0.0)
                    for m in range(len(ties) + 1)
                ]
            win += prob * math.fsum(t / (m + 1) for m, t in enumerate(ties))
        weights.append(win)
    return weights


def branch_probs_from_profile(counts: list[int]) -> list[float]:
    """Branch probabilities from profile execution counts (count_k / total)."""
    if not counts:
        raise ValueError("no branch counts")
    if any(c < 0 for c in counts):
        raise ValueError("branch counts must be >= 0")
    total = sum(counts)
    if total == 0:
        raise ValueError("all branch counts are zero")
    return [c / total for c in counts]


def analyze(g: FlowGraph, support_cap: int | None = DEFAULT_SUPPORT_CAP) -> AnalysisReport:
    """Flatten the graph and produce the full report.

    The confidence figure (probability of finishing by the deadline) is
    present exactly when the graph declares a deadline.
    """
    diags = validate(g)
    if diags:
        raise ValueError("invalid flow graph: " + "; ".join(diags))
    root = flatten(g)
    time = time_pmf(root, support_cap)
    power = power_pmf(root, support_cap)
    confidence = None if g.deadline is None else cdf_at(time, g.deadline)
    return AnalysisReport(
        time=time,
        power=power,
        mean_time=expectation(time),
        mean_power=expectation(power),
        std_power=std_dev(power),
        most_probable_power=most_probable(power),
        confidence_at_deadline=confidence,
        deadline=g.deadline,
    )
