"""Whole-graph time/power composition rules and the report builder."""

from __future__ import annotations

import pytest

from conftest import FIXTURE_FLOWS
from taskpower.analysis import (
    AnalysisError,
    analyze,
    branch_probs_from_profile,
    power_pmf,
    time_pmf,
)
from taskpower.flowgraph import (
    AndGroup,
    Branch,
    FlowGraph,
    Race,
    Sequence,
    TaskNode,
    flatten,
    parse_flow_file,
)
from taskpower.pmf import Unit, cdf_at, delta, expectation, make_pmf
from taskpower.reports import analysis_report_text


def task(tid: str, t: float, p: float, cycles: int = 1) -> TaskNode:
    return TaskNode(
        id=tid,
        time=delta(t, Unit.CYCLES),
        power=delta(p, Unit.MICROWATTS),
        cycles=cycles,
    )


class TestTimePmf:
    def test_deterministic_sequence(self):
        root = Sequence((task("a", 10, 1), task("b", 12, 1)))
        assert time_pmf(root).points == ((22.0, 1.0),)

    def test_and_is_max(self):
        root = AndGroup((task("a", 3, 1), task("b", 5, 1), task("c", 4, 1)))
        assert time_pmf(root).points == ((5.0, 1.0),)

    def test_branch_mixes(self):
        root = Branch(((0.3, task("a", 8, 1)), (0.7, task("b", 2, 1))))
        out = time_pmf(root)
        assert dict(out.points) == pytest.approx({2.0: 0.7, 8.0: 0.3})
        assert expectation(out) == pytest.approx(3.8)

    def test_race_is_min(self):
        root = Race((task("a", 4, 1), task("b", 6, 1)))
        assert time_pmf(root).points == ((4.0, 1.0),)


class TestPowerPmf:
    def test_and_powers_add(self):
        root = AndGroup((task("a", 1, 10), task("b", 1, 20), task("c", 1, 30)))
        assert power_pmf(root).points == ((60.0, 1.0),)

    def test_equal_duration_sequence_averages(self):
        root = Sequence((task("a", 7, 10), task("b", 7, 20), task("c", 7, 30)))
        assert power_pmf(root).points == ((20.0, 1.0),)

    def test_time_weighted_sequence(self):
        # (12*1 + 24*2) / 3 = 20
        root = Sequence((task("a", 1, 12), task("b", 2, 24)))
        assert power_pmf(root).points == ((20.0, 1.0),)

    def test_branch_mixes(self):
        root = Branch(((0.25, task("a", 1, 8)), (0.75, task("b", 1, 16))))
        assert dict(power_pmf(root).points) == pytest.approx({8.0: 0.25, 16.0: 0.75})

    def test_race_winner_takes_all(self):
        # a wins when it draws 2 (prob 0.5); ties cannot happen here
        a = TaskNode("a", make_pmf([(2, 0.5), (9, 0.5)], Unit.CYCLES),
                     delta(10, Unit.MICROWATTS), 2)
        b = task("b", 5, 50)
        out = power_pmf(Race((a, b)))
        assert dict(out.points) == pytest.approx({10.0: 0.5, 50.0: 0.5})

    def test_race_tie_splits_evenly(self):
        out = power_pmf(Race((task("a", 5, 10), task("b", 5, 30))))
        assert dict(out.points) == pytest.approx({10.0: 0.5, 30.0: 0.5})

    def test_zero_duration_sequence_rejected(self):
        root = Sequence((task("a", 0, 10), task("b", 0, 20)))
        with pytest.raises(AnalysisError, match="zero total expected duration"):
            power_pmf(root)

    def test_zero_duration_stage_is_skipped(self):
        root = Sequence((task("a", 0, 99), task("b", 4, 20)))
        assert power_pmf(root).points == ((20.0, 1.0),)


class TestAnalyze:
    def test_single_task_confident(self):
        g = parse_flow_file(FIXTURE_FLOWS["single"])
        rep = analyze(g)
        assert rep.mean_time == 10.0
        assert rep.mean_power == 5.0
        assert rep.confidence_at_deadline == pytest.approx(1.0)

    def test_single_task_misses_tight_deadline(self):
        g = parse_flow_file(FIXTURE_FLOWS["single"].replace("deadline=10", "deadline=9"))
        assert analyze(g).confidence_at_deadline == 0.0

    def test_no_deadline_no_confidence(self):
        g = parse_flow_file("flow main { task t time={1:1} power={2:1} cycles=1 }")
        rep = analyze(g)
        assert rep.confidence_at_deadline is None
        assert rep.deadline is None

    def test_three_arm_branch_matches_hand_enumeration(self):
        # outcomes: (t=4,p=10)@0.5, (t=6,p=20)@0.3, (t=8,p=30)@0.2
        text = """
        flowgraph entry=main deadline=6
        flow main {
          branch {
            0.5: task a time={4:1} power={10:1} cycles=4
            0.3: task b time={6:1} power={20:1} cycles=6
            0.2: task c time={8:1} power={30:1} cycles=8
          }
        }
        """
        rep = analyze(parse_flow_file(text))
        assert dict(rep.time.points) == pytest.approx({4.0: 0.5, 6.0: 0.3, 8.0: 0.2})
        assert dict(rep.power.points) == pytest.approx({10.0: 0.5, 20.0: 0.3, 30.0: 0.2})
        assert rep.mean_time == pytest.approx(5.4)
        assert rep.mean_power == pytest.approx(17.0)
        assert rep.most_probable_power == 10.0
        assert rep.confidence_at_deadline == pytest.approx(0.8)

    def test_summary_fields_match_reductions(self, fixture_graph):
        from taskpower.pmf import most_probable, std_dev

        rep = analyze(fixture_graph)
        assert rep.mean_power == expectation(rep.power)
        assert rep.std_power == std_dev(rep.power)
        assert rep.most_probable_power == most_probable(rep.power)
        assert rep.mean_time == expectation(rep.time)
        if fixture_graph.deadline is not None:
            assert rep.confidence_at_deadline == cdf_at(rep.time, fixture_graph.deadline)

    def test_deterministic_reports(self, fixture_graph):
        a = analyze(fixture_graph)
        b = analyze(fixture_graph)
        assert a == b
        assert analysis_report_text(a) == analysis_report_text(b)

    def test_rejects_invalid_graph(self):
        g = FlowGraph(flows={"main": Branch(((0.9, task("a", 1, 1)),))}, entry="main")
        with pytest.raises(ValueError, match="invalid flow graph"):
            analyze(g)


class TestCompositionLaws:
    def test_sequence_mean_time_additive(self, fixture_graph):
        root = flatten(fixture_graph)
        wrapped = Sequence((root, task("extra", 11, 7)))
        got = expectation(time_pmf(wrapped, None))
        assert got == pytest.approx(expectation(time_pmf(root, None)) + 11.0, rel=1e-9)

    def test_degenerate_branch_identity(self, fixture_graph):
        root = flatten(fixture_graph)
        wrapped = Branch(((1.0, root),))
        assert time_pmf(wrapped, None).points == time_pmf(root, None).points

    def test_confidence_monotone_in_deadline(self):
        g = parse_flow_file(FIXTURE_FLOWS["stochastic"])
        time = analyze(g).time
        probes = [cdf_at(time, d) for d in (0, 5, 10, 15, 20, 25, 30, 50)]
        assert all(x <= y + 1e-12 for x, y in zip(probes, probes[1:]))

    def test_support_cap_controls_blowup(self):
        g = parse_flow_file(FIXTURE_FLOWS["stochastic"])
        rep = analyze(g, support_cap=8)
        assert len(rep.time) <= 8
        assert len(rep.power) <= 8
        full = analyze(g, support_cap=None)
        assert rep.mean_time == pytest.approx(full.mean_time, rel=1e-9)
        assert rep.mean_power == pytest.approx(full.mean_power, rel=1e-6)


class TestBranchProbs:
    def test_two_way(self):
        assert branch_probs_from_profile([30, 70]) == [0.3, 0.7]

    def test_single(self):
        assert branch_probs_from_profile([5]) == [1.0]

    def test_three_way(self):
        assert branch_probs_from_profile([1, 1, 2]) == [0.25, 0.25, 0.5]

    def test_rejects_all_zero(self):
        with pytest.raises(ValueError, match="all branch counts are zero"):
            branch_probs_from_profile([0, 0])

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            branch_probs_from_profile([3, -1])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            branch_probs_from_profile([])
