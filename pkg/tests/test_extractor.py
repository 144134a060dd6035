"""IR and library parsing plus flow-graph emission."""

from __future__ import annotations

import pytest

from conftest import FU_TEXT, IR_TEXT
from taskpower.extractor import (
    FuLibrary,
    IrParseError,
    extract_flow,
    parse_fu_library,
    parse_ir,
    transition_probabilities,
)
from taskpower.flowgraph import (
    AndGroup,
    Branch,
    Sequence,
    SubflowRef,
    TaskNode,
    flatten,
    iter_tasks,
    serialize_flow_file,
    validate,
)
from taskpower.pmf import Unit


class TestParseIr:
    def test_two_blocks_one_edge(self):
        ir = parse_ir("block A\n  op alu @0\n  succ B:5\nblock B\n  op alu @0\n")
        assert [b.id for b in ir.blocks] == ["A", "B"]
        assert ir.edges == (("A", "B", 5),)

    def test_full_fixture(self):
        ir = parse_ir(IR_TEXT)
        assert len(ir.blocks) == 4
        assert ir.blocks[0].ops == (("ialu", 0), ("ialu", 0), ("imul", 1))
        assert ("BB1", "BB2", 30) in ir.edges
        assert ("BB1", "BB3", 70) in ir.edges

    def test_negative_schedule_time_rejected(self):
        with pytest.raises(IrParseError) as err:
            parse_ir("block A\n  op alu @-1\n")
        assert err.value.line == 2

    def test_empty_block_rejected(self):
        with pytest.raises(IrParseError, match="has no ops"):
            parse_ir("block A\nblock B\n  op alu @0\n")

    def test_trailing_empty_block_rejected(self):
        with pytest.raises(IrParseError, match="has no ops"):
            parse_ir("block A\n  op alu @0\nblock B\n")

    def test_duplicate_block_rejected(self):
        with pytest.raises(IrParseError, match="duplicate block"):
            parse_ir("block A\n  op alu @0\nblock A\n  op alu @0\n")

    def test_dangling_successor_rejected(self):
        with pytest.raises(IrParseError, match="not a block"):
            parse_ir("block A\n  op alu @0\n  succ GHOST:3\n")

    def test_op_outside_block_rejected(self):
        with pytest.raises(IrParseError, match="outside"):
            parse_ir("op alu @0\n")

    def test_unknown_directive_rejected(self):
        with pytest.raises(IrParseError, match="unknown directive"):
            parse_ir("block A\n  op alu @0\n  frobnicate\n")

    def test_comments_ignored(self):
        ir = parse_ir("# header\nblock A  # trailing\n  op alu @0\n")
        assert ir.blocks[0].id == "A"

    def test_repeated_edges_merge(self):
        ir = parse_ir("block A\n  op alu @0\n  succ B:2 B:3\nblock B\n  op alu @0\n")
        assert ir.edges == (("A", "B", 5),)


class TestParseFuLibrary:
    def test_fixture(self):
        lib = parse_fu_library(FU_TEXT)
        assert set(lib.entries) == {"ialu", "imul", "ld", "st"}
        assert lib.delay("imul") == 3
        assert lib.energy("ialu").unit is Unit.MICROWATT_CYCLES
        assert lib.energy("ialu").points == ((38.0, 0.2), (41.0, 0.6), (45.0, 0.2))

    def test_rejects_bad_line(self):
        with pytest.raises(IrParseError):
            parse_fu_library("fu alu delay=1\n")

    def test_rejects_duplicate(self):
        text = "fu alu delay=1 energy={1:1}\nfu alu delay=2 energy={2:1}\n"
        with pytest.raises(IrParseError, match="duplicate fu"):
            parse_fu_library(text)

    def test_rejects_zero_delay(self):
        with pytest.raises(IrParseError, match="delay must be >= 1"):
            parse_fu_library("fu alu delay=0 energy={1:1}\n")

    def test_rejects_bad_energy(self):
        with pytest.raises(IrParseError):
            parse_fu_library("fu alu delay=1 energy={}\n")

    def test_rejects_empty(self):
        with pytest.raises(IrParseError, match="no fu entries"):
            parse_fu_library("# nothing here\n")


class TestTransitionProbabilities:
    def test_sequence_of_three(self):
        assert transition_probabilities("sequence", 3) == pytest.approx(1 / 3)

    def test_concurrent_of_three(self):
        assert transition_probabilities("concurrent", 3) == 1.0

    def test_sequence_of_one(self):
        assert transition_probabilities("sequence", 1) == 1.0

    def test_rejects_bad_n(self):
        with pytest.raises(ValueError):
            transition_probabilities("sequence", 0)

    def test_rejects_bad_kind(self):
        with pytest.raises(ValueError):
            transition_probabilities("parallel", 2)


class TestExtractFlow:
    def test_schedule_slot_grouping(self):
        ir = parse_ir("block A\n  op alu @0\n  op alu @0\n  op mul @1\n")
        lib = parse_fu_library(
            "fu alu delay=1 energy={10:1}\nfu mul delay=3 energy={30:1}\n"
        )
        g = extract_flow(ir, lib)
        body = g.flows["A"]
        assert isinstance(body, Sequence)
        assert len(body.children) == 2  # one stage per distinct schedule time
        stage0, stage1 = body.children
        assert isinstance(stage0, AndGroup) and len(stage0.children) == 2
        assert isinstance(stage1, TaskNode)
        assert stage1.cycles == 3
        assert stage1.time.points == ((3.0, 1.0),)
        assert stage1.label == "mul"

    def test_branch_probabilities_follow_counts(self):
        g = extract_flow(parse_ir(IR_TEXT), parse_fu_library(FU_TEXT))
        outer = g.flows["BB1"]
        branch = outer.children[-1]
        assert isinstance(branch, Branch)
        probs = {arm.name: p for p, arm in branch.arms}
        assert probs == pytest.approx({"BB2": 0.3, "BB3": 0.7})

    def test_single_block_single_op(self):
        g = extract_flow(
            parse_ir("block A\n  op alu @0\n"),
            parse_fu_library("fu alu delay=2 energy={5:1}\n"),
        )
        tasks = list(iter_tasks(flatten(g)))
        assert len(tasks) == 1
        assert tasks[0].scalable

    def test_power_is_energy_distribution(self):
        g = extract_flow(parse_ir(IR_TEXT), parse_fu_library(FU_TEXT))
        t = next(iter_tasks(flatten(g)))
        assert t.power.unit is Unit.MICROWATTS
        assert t.power.points == ((38.0, 0.2), (41.0, 0.6), (45.0, 0.2))

    def test_missing_fu_type_named(self):
        ir = parse_ir("block A\n  op mystery @0\n")
        lib = parse_fu_library("fu alu delay=1 energy={1:1}\n")
        with pytest.raises(ValueError, match="mystery"):
            extract_flow(ir, lib)

    def test_zero_total_successor_count(self):
        ir = parse_ir(
            "block A\n  op alu @0\n  succ B:0 C:0\n"
            "block B\n  op alu @0\nblock C\n  op alu @0\n"
        )
        lib = parse_fu_library("fu alu delay=1 energy={1:1}\n")
        with pytest.raises(ValueError, match="zero"):
            extract_flow(ir, lib)

    def test_cycle_rejected(self):
        ir = parse_ir(
            "block A\n  op alu @0\n  succ B:1\nblock B\n  op alu @0\n  succ A:1\n"
        )
        lib = parse_fu_library("fu alu delay=1 energy={1:1}\n")
        with pytest.raises(ValueError, match="cycle"):
            extract_flow(ir, lib)

    def test_self_loop_rejected(self):
        ir = parse_ir("block A\n  op alu @0\n  succ A:1\n")
        lib = parse_fu_library("fu alu delay=1 energy={1:1}\n")
        with pytest.raises(ValueError, match="cycle"):
            extract_flow(ir, lib)

    def test_single_successor_sequenced_regardless_of_count(self):
        ir = parse_ir("block A\n  op alu @0\n  succ B:0\nblock B\n  op alu @0\n")
        lib = parse_fu_library("fu alu delay=1 energy={1:1}\n")
        g = extract_flow(ir, lib)
        tail = g.flows["A"].children[-1]
        assert isinstance(tail, SubflowRef) and tail.name == "B"


class TestExtractInvariants:
    def test_emitted_graph_validates(self):
        g = extract_flow(parse_ir(IR_TEXT), parse_fu_library(FU_TEXT))
        assert validate(g) == []

    def test_op_count_conserved(self):
        ir = parse_ir(IR_TEXT)
        g = extract_flow(ir, parse_fu_library(FU_TEXT))
        total_ops = sum(len(b.ops) for b in ir.blocks)
        emitted = sum(
            1 for name in g.flows for _ in iter_tasks_local(g.flows[name])
        )
        assert emitted == total_ops

    def test_stage_count_matches_distinct_schedule_times(self):
        ir = parse_ir(IR_TEXT)
        g = extract_flow(ir, parse_fu_library(FU_TEXT))
        for block in ir.blocks:
            body = g.flows[block.id]
            stages = body.children[0] if _has_continuation(body) else body
            assert isinstance(stages, Sequence)
            assert len(stages.children) == len({t for _, t in block.ops})

    def test_branch_probs_sum_to_one(self):
        g = extract_flow(parse_ir(IR_TEXT), parse_fu_library(FU_TEXT))
        branch = g.flows["BB1"].children[-1]
        assert sum(p for p, _ in branch.arms) == pytest.approx(1.0, abs=1e-9)

    def test_extraction_deterministic(self):
        a = extract_flow(parse_ir(IR_TEXT), parse_fu_library(FU_TEXT))
        b = extract_flow(parse_ir(IR_TEXT), parse_fu_library(FU_TEXT))
        assert serialize_flow_file(a) == serialize_flow_file(b)


def _has_continuation(body: Sequence) -> bool:
    tail = body.children[-1]
    return isinstance(tail, (SubflowRef, Branch))


def iter_tasks_local(node):
    """Task iteration that walks through subflow refs without resolving."""
    if isinstance(node, TaskNode):
        yield node
    elif isinstance(node, (Sequence, AndGroup)):
        for c in node.children:
            yield from iter_tasks_local(c)
    elif isinstance(node, Branch):
        for _, c in node.arms:
            yield from iter_tasks_local(c)
