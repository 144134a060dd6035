"""Flow-graph extraction from a scheduled block-level IR.

The IR is a minimal line-oriented listing of basic blocks: each block names
the functional unit and schedule slot of its operations and (optionally) its
successor blocks with profile counts.  Combined with a functional-unit
library (per-operation energy distribution and delay), every block turns
into a subflow: operations sharing a schedule slot run concurrently, the
slots run in sequence, and multi-successor blocks become probability
branches weighted by the profile counts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .flowgraph import (
    AndGroup,
    Branch,
    FlowGraph,
    FlowNode,
    Sequence,
    SubflowRef,
    TaskNode,
)
from .pmf import Pmf, Unit, delta, parse_pmf_literal

__all__ = [
    "FuLibrary",
    "IrBlock",
    "IrParseError",
    "IrProgram",
    "extract_flow",
    "parse_fu_library",
    "parse_ir",
    "transition_probabilities",
]


class IrParseError(ValueError):
    """Malformed IR or library text, with the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class IrBlock:
    id: str
    ops: tuple[tuple[str, int], ...]  # (fu_type, schedule_time)


@dataclass(frozen=True)
class IrProgram:
    blocks: tuple[IrBlock, ...]
    edges: tuple[tuple[str, str, int], ...]  # (from, to, execution count)


@dataclass(frozen=True)
class FuLibrary:
    """Functional-unit characterization: per-operation energy Pmf and delay."""

    entries: dict[str, tuple[Pmf, int]]

    def energy(self, fu_type: str) -> Pmf:
        return self.entries[fu_type][0]

    def delay(self, fu_type: str) -> int:
        return self.entries[fu_type][1]


_OP_RE = re.compile(r"^op\s+(\S+)\s+@(\d+)$")
_SUCC_RE = re.compile(r"^(\S+):(\d+)$")


def parse_ir(text: str) -> IrProgram:
    """Parse IR text into blocks and profile-weighted successor edges."""
    blocks: list[IrBlock] = []
    block_ids: set[str] = set()
    current: str | None = None
    current_ops: list[tuple[str, int]] = []
    succ_lines: list[tuple[str, str, int, int]] = []  # from, to, count, line

    def close_block(line: int) -> None:
        nonlocal current
        if current is None:
            return
        if not current_ops:
            raise IrParseError(f"block {current!r} has no ops", line)
        blocks.append(IrBlock(current, tuple(current_ops)))
        current = None
        current_ops.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("block"):
            parts = line.split()
            if len(parts) != 2:
                raise IrParseError(f"bad block line {raw.strip()!r}", lineno)
            close_block(lineno)
            if parts[1] in block_ids:
                raise IrParseError(f"duplicate block id {parts[1]!r}", lineno)
            block_ids.add(parts[1])
            current = parts[1]
        elif line.startswith("op"):
            if current is None:
                raise IrParseError("op outside of a block", lineno)
            m = _OP_RE.match(line)
            if m is None:
                raise IrParseError(f"bad op line {raw.strip()!r}", lineno)
            current_ops.append((m.group(1), int(m.group(2))))
        elif line.startswith("succ"):
            if current is None:
                raise IrParseError("succ outside of a block", lineno)
            for chunk in line.split()[1:]:
                m = _SUCC_RE.match(chunk)
                if m is None:
                    raise IrParseError(f"bad successor {chunk!r}", lineno)
                succ_lines.append((current, m.group(1), int(m.group(2)), lineno))
        else:
            raise IrParseError(f"unknown directive {raw.strip()!r}", lineno)
    close_block(len(text.splitlines()))
    if not blocks:
        raise IrParseError("no blocks defined", 1)

    # Merge repeated (from, to) pairs, preserving first-seen order.
    merged: dict[tuple[str, str], int] = {}
    for src, dst, count, lineno in succ_lines:
        if dst not in block_ids:
            raise IrParseError(f"successor {dst!r} is not a block", lineno)
        merged[(src, dst)] = merged.get((src, dst), 0) + count
    edges = tuple((src, dst, count) for (src, dst), count in merged.items())
    return IrProgram(blocks=tuple(blocks), edges=edges)


_FU_RE = re.compile(
    r"^fu\s+(?P<name>\S+)\s+delay=(?P<delay>\d+)\s+energy=(?P<energy>\{.*\})\s*$"
)


def parse_fu_library(text: str) -> FuLibrary:
    """Parse `fu NAME delay=N energy={...}` lines into a library."""
    entries: dict[str, tuple[Pmf, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _FU_RE.match(line)
        if m is None:
            raise IrParseError(f"bad fu line {raw.strip()!r}", lineno)
        name = m.group("name")
        if name in entries:
            raise IrParseError(f"duplicate fu type {name!r}", lineno)
        delay = int(m.group("delay"))
        if delay < 1:
            raise IrParseError(f"fu {name!r} delay must be >= 1", lineno)
        try:
            energy = parse_pmf_literal(m.group("energy"), Unit.MICROWATT_CYCLES)
        except ValueError as exc:
            raise IrParseError(f"fu {name!r}: {exc}", lineno) from exc
        entries[name] = (energy, delay)
    if not entries:
        raise IrParseError("no fu entries defined", 1)
    return FuLibrary(entries)


def transition_probabilities(kind: str, n: int) -> float:
    """Per-node weight when composing power: 1/n across a sequence of n
    nodes, 1 for concurrent nodes."""
    if n < 1:
        raise ValueError(f"n {n!r} must be >= 1")
    if kind == "sequence":
        return 1.0 / n
    if kind == "concurrent":
        return 1.0
    raise ValueError(f"kind must be 'sequence' or 'concurrent', got {kind!r}")


def extract_flow(ir: IrProgram, lib: FuLibrary) -> FlowGraph:
    """Turn an IR program into a flow graph, one subflow per block.

    Within a block, ops sharing a schedule slot form an and-group and the
    slots run in ascending order; the per-op energy distribution becomes the
    task's power and the library delay its (deterministic) time and nominal
    cycle count.  Control flow follows the profile edges: one successor is
    sequenced, several become a branch with count-proportional
    probabilities.  Cycles in the block graph are rejected.
    """
    missing = sorted(
        {fu for block in ir.blocks for fu, _ in block.ops if fu not in lib.entries}
    )
    if missing:
        raise ValueError(f"fu types missing from library: {', '.join(missing)}")
    _reject_cycles(ir)

    successors: dict[str, list[tuple[str, int]]] = {b.id: [] for b in ir.blocks}
    for src, dst, count in ir.edges:
        successors[src].append((dst, count))

    flows: dict[str, FlowNode] = {}
    for block in ir.blocks:
        groups: dict[int, list[TaskNode]] = {}
        for index, (fu, slot) in enumerate(block.ops):
            energy, fu_delay = lib.entries[fu]
            task = TaskNode(
                id=f"{block.id}_op{index}",
                time=delta(float(fu_delay), Unit.CYCLES),
                power=Pmf(energy.values, energy.probs, Unit.MICROWATTS),
                cycles=fu_delay,
                scalable=True,
                label=fu,
            )
            groups.setdefault(slot, []).append(task)
        stages: list[FlowNode] = []
        for slot in sorted(groups):
            members = groups[slot]
            stages.append(members[0] if len(members) == 1 else AndGroup(tuple(members)))
        body: FlowNode = Sequence(tuple(stages))

        succ = successors[block.id]
        if len(succ) == 1:
            body = Sequence((body, SubflowRef(succ[0][0])))
        elif len(succ) >= 2:
            total = sum(count for _, count in succ)
            if total <= 0:
                raise ValueError(
                    f"block {block.id!r} branches but all successor counts are zero"
                )
            arms = tuple(
                (count / total, SubflowRef(dst)) for dst, count in succ
            )
            body = Sequence((body, Branch(arms)))
        flows[block.id] = body

    return FlowGraph(flows=flows, entry=ir.blocks[0].id)


def _reject_cycles(ir: IrProgram) -> None:
    adj: dict[str, list[str]] = {b.id: [] for b in ir.blocks}
    for src, dst, _ in ir.edges:
        adj[src].append(dst)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {b: WHITE for b in adj}

    def visit(node: str, trail: list[str]) -> None:
        color[node] = GRAY
        trail.append(node)
        for succ in adj[node]:
            if color[succ] == GRAY:
                cycle = trail[trail.index(succ):] + [succ]
                raise ValueError("cycle in block graph: " + " -> ".join(cycle))
            if color[succ] == WHITE:
                visit(succ, trail)
        trail.pop()
        color[node] = BLACK

    for block in ir.blocks:
        if color[block.id] == WHITE:
            visit(block.id, [])
