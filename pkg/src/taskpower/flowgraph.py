"""Hierarchical concurrent flow graph model and its textual file format.

A flow graph is a named set of flows, each a tree built from task leaves and
four composition constructs:

* ``seq``    - children execute one after another
* ``and``    - children execute concurrently, all must finish
* ``branch`` - exactly one child executes, chosen with a fixed probability
* ``race``   - children execute concurrently, the first to finish wins

``sub`` nodes reference another flow by name, giving hierarchy; the reference
graph must be acyclic.  Graphs are immutable once built.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Union

from .pmf import Pmf, Unit, format_number, format_pmf_literal, make_pmf

__all__ = [
    "AndGroup",
    "Branch",
    "FlowGraph",
    "FlowNode",
    "FlowParseError",
    "Race",
    "Sequence",
    "SubflowRef",
    "TaskNode",
    "flatten",
    "graphs_equal",
    "iter_tasks",
    "map_tasks",
    "parse_flow_file",
    "serialize_flow_file",
    "validate",
]

PROB_TOL = 1e-9


@dataclass(frozen=True)
class TaskNode:
    """Leaf of a flow: one task with stochastic time and power.

    `cycles` is the nominal cycle count used by slowdown accounting and is
    kept separate from the time distribution; `scalable` marks tasks whose
    voltage may be lowered.
    """

    id: str
    time: Pmf
    power: Pmf
    cycles: int
    scalable: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        if not self.label:
            object.__setattr__(self, "label", self.id)


@dataclass(frozen=True)
class Sequence:
    children: tuple["FlowNode", ...]


@dataclass(frozen=True)
class AndGroup:
    children: tuple["FlowNode", ...]


@dataclass(frozen=True)
class Race:
    children: tuple["FlowNode", ...]


@dataclass(frozen=True)
class Branch:
    arms: tuple[tuple[float, "FlowNode"], ...]


@dataclass(frozen=True)
class SubflowRef:
    name: str


FlowNode = Union[TaskNode, Sequence, AndGroup, Race, Branch, SubflowRef]


@dataclass(frozen=True)
class FlowGraph:
    """Named flows plus the entry flow and optional timing requirements."""

    flows: dict[str, FlowNode]
    entry: str
    deadline: float | None = None
    confidence: float | None = None


# ---------------------------------------------------------------------------
# validation


def validate(g: FlowGraph) -> list[str]:
    """Return one diagnostic per invariant violation (empty list = valid)."""
    diags: list[str] = []
    if g.entry not in g.flows:
        diags.append(f"entry flow {g.entry!r} is not defined")
    if g.deadline is not None and not (math.isfinite(g.deadline) and g.deadline > 0):
        diags.append(f"deadline {g.deadline!r} must be > 0")
    if g.confidence is not None and not (0.0 < g.confidence <= 1.0):
        diags.append(f"confidence {g.confidence!r} must be in (0, 1]")

    for name in sorted(g.flows):
        seen_ids: set[str] = set()
        _validate_node(g, g.flows[name], name, seen_ids, diags)

    cycle = _find_reference_cycle(g)
    if cycle is not None:
        diags.append("recursive subflow: " + " -> ".join(cycle))
    return diags


def _validate_node(
    g: FlowGraph, node: FlowNode, path: str, seen_ids: set[str], diags: list[str]
) -> None:
    if isinstance(node, TaskNode):
        if node.id in seen_ids:
            diags.append(f"{path}: duplicate task id {node.id!r}")
        seen_ids.add(node.id)
        if node.time.unit is not Unit.CYCLES:
            diags.append(f"{path}: task {node.id!r} time unit is {node.time.unit.value}")
        if node.power.unit is not Unit.MICROWATTS:
            diags.append(f"{path}: task {node.id!r} power unit is {node.power.unit.value}")
        if node.cycles < 0:
            diags.append(f"{path}: task {node.id!r} cycles {node.cycles} < 0")
    elif isinstance(node, (Sequence, AndGroup, Race)):
        kind = _KIND_NAMES[type(node)]
        if not node.children:
            diags.append(f"{path}: {kind} has no children")
        for i, child in enumerate(node.children):
            _validate_node(g, child, f"{path}/{kind}[{i}]", seen_ids, diags)
    elif isinstance(node, Branch):
        if not node.arms:
            diags.append(f"{path}: branch has no arms")
        else:
            total = math.fsum(p for p, _ in node.arms)
            if abs(total - 1.0) > PROB_TOL:
                diags.append(f"{path}: branch probabilities sum to {total:g}")
        for i, (prob, child) in enumerate(node.arms):
            if prob < 0.0:
                diags.append(f"{path}/branch[{i}]: negative probability {prob:g}")
            _validate_node(g, child, f"{path}/branch[{i}]", seen_ids, diags)
    elif isinstance(node, SubflowRef):
        if node.name not in g.flows:
            diags.append(f"{path}: unresolved subflow {node.name!r}")
    else:
        diags.append(f"{path}: unknown node {node!r}")


_KIND_NAMES = {Sequence: "seq", AndGroup: "and", Race: "race"}


def _references(node: FlowNode) -> Iterator[str]:
    if isinstance(node, SubflowRef):
        yield node.name
    elif isinstance(node, (Sequence, AndGroup, Race)):
        for child in node.children:
            yield from _references(child)
    elif isinstance(node, Branch):
        for _, child in node.arms:
            yield from _references(child)


def _find_reference_cycle(g: FlowGraph) -> list[str] | None:
    """DFS over the flow-reference graph; returns a cycle path if any."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {name: WHITE for name in g.flows}
    stack: list[str] = []

    def visit(name: str) -> list[str] | None:
        color[name] = GRAY
        stack.append(name)
        for ref in _references(g.flows[name]):
            if ref not in g.flows:
                continue
            if color[ref] == GRAY:
                return stack[stack.index(ref):] + [ref]
            if color[ref] == WHITE:
                found = visit(ref)
                if found:
                    return found
        stack.pop()
        color[name] = BLACK
        return None

    for name in sorted(g.flows):
        if color[name] == WHITE:
            found = visit(name)
            if found:
                return found
    return None


# ---------------------------------------------------------------------------
# tree utilities


def iter_tasks(node: FlowNode) -> Iterator[TaskNode]:
    """All task leaves under `node`, depth-first left-to-right."""
    if isinstance(node, TaskNode):
        yield node
    elif isinstance(node, (Sequence, AndGroup, Race)):
        for child in node.children:
            yield from iter_tasks(child)
    elif isinstance(node, Branch):
        for _, child in node.arms:
            yield from iter_tasks(child)
    elif isinstance(node, SubflowRef):
        raise ValueError(f"unflattened subflow reference {node.name!r}")


def map_tasks(node: FlowNode, fn: Callable[[TaskNode], TaskNode]) -> FlowNode:
    """Rebuild the tree with every task leaf replaced by fn(task)."""
    if isinstance(node, TaskNode):
        return fn(node)
    if isinstance(node, (Sequence, AndGroup, Race)):
        return type(node)(tuple(map_tasks(c, fn) for c in node.children))
    if isinstance(node, Branch):
        return Branch(tuple((p, map_tasks(c, fn)) for p, c in node.arms))
    raise ValueError(f"unflattened subflow reference {node.name!r}")


def flatten(g: FlowGraph) -> FlowNode:
    """Inline every subflow reference, starting from the entry flow.

    Inlined task ids get an instantiation-path suffix (`@flow.N`) so that a
    flow used twice yields distinct ids; tasks of the entry flow keep theirs.
    """
    diags = validate(g)
    if diags:
        raise ValueError("invalid flow graph: " + "; ".join(diags))
    counter = [0]

    def inline(node: FlowNode, suffix: str) -> FlowNode:
        if isinstance(node, TaskNode):
            return node if not suffix else replace(node, id=node.id + suffix)
        if isinstance(node, (Sequence, AndGroup, Race)):
            return type(node)(tuple(inline(c, suffix) for c in node.children))
        if isinstance(node, Branch):
            return Branch(tuple((p, inline(c, suffix)) for p, c in node.arms))
        counter[0] += 1
        return inline(g.flows[node.name], f"{suffix}@{node.name}.{counter[0]}")

    return inline(g.flows[g.entry], "")


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<number>[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_@./\-]*)
  | (?P<string>"[^"\n]*")
  | (?P<punct>[{}:,=])
    """,
    re.VERBOSE,
)


class FlowParseError(ValueError):
    """Syntax or semantic error in a flow file, with source position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


@dataclass
class _Token:
    kind: str  # number | name | string | punct | eof
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FlowParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        lexeme = m.group()
        if kind == "nl":
            line += 1
            col = 1
        else:
            if kind not in ("ws", "comment"):
                tokens.append(_Token(kind, lexeme, line, col))
            col += len(lexeme)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def fail(self, message: str, tok: _Token | None = None) -> FlowParseError:
        tok = tok or self.peek()
        return FlowParseError(message, tok.line, tok.col)

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.next()
        if tok.kind != kind or (text is not None and tok.text != text):
            wanted = text or kind
            raise self.fail(f"expected {wanted!r}, got {tok.text or 'end of file'!r}", tok)
        return tok

    # grammar -----------------------------------------------------------

    def parse_graph(self) -> FlowGraph:
        entry = None
        deadline = None
        confidence = None
        if self.peek().kind == "name" and self.peek().text == "flowgraph":
            self.next()
            while self.peek().kind == "name" and self.peek().text in (
                "entry", "deadline", "confidence",
            ):
                key = self.next().text
                self.expect("punct", "=")
                if key == "entry":
                    entry = self.expect("name").text
                elif key == "deadline":
                    deadline = float(self.expect("number").text)
                else:
                    confidence = float(self.expect("number").text)
        flows: dict[str, FlowNode] = {}
        while self.peek().kind != "eof":
            tok = self.expect("name", "flow")
            name_tok = self.expect("name")
            if name_tok.text in flows:
                raise self.fail(f"duplicate flow name {name_tok.text!r}", name_tok)
            self.expect("punct", "{")
            nodes = []
            while not self._at_close():
                nodes.append(self.parse_node())
            self.expect("punct", "}")
            if not nodes:
                raise self.fail(f"flow {name_tok.text!r} is empty", tok)
            flows[name_tok.text] = nodes[0] if len(nodes) == 1 else Sequence(tuple(nodes))
        if not flows:
            raise self.fail("no flows defined")
        if entry is None:
            entry = next(iter(flows))
        return FlowGraph(flows=flows, entry=entry, deadline=deadline, confidence=confidence)

    def _at_close(self) -> bool:
        tok = self.peek()
        return tok.kind == "eof" or (tok.kind == "punct" and tok.text == "}")

    def parse_node(self) -> FlowNode:
        tok = self.peek()
        if tok.kind != "name":
            raise self.fail(f"expected a node, got {tok.text or 'end of file'!r}")
        if tok.text == "task":
            return self.parse_task()
        if tok.text in ("seq", "and", "race"):
            self.next()
            self.expect("punct", "{")
            children = []
            while not self._at_close():
                children.append(self.parse_node())
            self.expect("punct", "}")
            if not children:
                raise self.fail(f"empty {tok.text} block", tok)
            cls = {"seq": Sequence, "and": AndGroup, "race": Race}[tok.text]
            return cls(tuple(children))
        if tok.text == "branch":
            self.next()
            self.expect("punct", "{")
            arms = []
            while not self._at_close():
                prob = float(self.expect("number").text)
                self.expect("punct", ":")
                arms.append((prob, self.parse_node()))
            self.expect("punct", "}")
            if not arms:
                raise self.fail("empty branch block", tok)
            # The canonical 9-significant-digit form can push the arm sum a
            # hair past the 1e-9 tolerance; absorb formatting noise but let
            # genuinely wrong sums through to validation.
            total = math.fsum(p for p, _ in arms)
            if total > 0 and abs(total - 1.0) <= 1e-6:
                arms = [(p / total, node) for p, node in arms]
            return Branch(tuple(arms))
        if tok.text == "sub":
            self.next()
            return SubflowRef(self.expect("name").text)
        raise self.fail(f"unknown construct {tok.text!r}", tok)

    def parse_task(self) -> TaskNode:
        self.expect("name", "task")
        id_tok = self.expect("name")
        time = None
        power = None
        cycles = None
        scalable = False
        label = ""
        while self.peek().kind == "name" and self.peek().text in (
            "time", "power", "cycles", "scalable", "label",
        ):
            key = self.next().text
            if key == "scalable":
                scalable = True
                continue
            self.expect("punct", "=")
            if key == "cycles":
                num = self.expect("number")
                val = float(num.text)
                if not val.is_integer():
                    raise self.fail(f"cycles must be an integer, got {num.text}", num)
                cycles = int(val)
            elif key == "label":
                label = self.expect("string").text[1:-1]
            else:
                unit = Unit.CYCLES if key == "time" else Unit.MICROWATTS
                pmf = self.parse_pmf(unit)
                if key == "time":
                    time = pmf
                else:
                    power = pmf
        for attr, value in (("time", time), ("power", power), ("cycles", cycles)):
            if value is None:
                raise self.fail(f"task {id_tok.text!r} is missing {attr}", id_tok)
        return TaskNode(id=id_tok.text, time=time, power=power, cycles=cycles,
                        scalable=scalable, label=label)

    def parse_pmf(self, unit: Unit) -> Pmf:
        open_tok = self.expect("punct", "{")
        points = []
        while True:
            value = float(self.expect("number").text)
            self.expect("punct", ":")
            prob = float(self.expect("number").text)
            points.append((value, prob))
            tok = self.next()
            if tok.kind == "punct" and tok.text == "}":
                break
            if not (tok.kind == "punct" and tok.text == ","):
                raise self.fail(f"expected ',' or '}}', got {tok.text!r}", tok)
        try:
            return make_pmf(points, unit)
        except ValueError as exc:
            raise self.fail(str(exc), open_tok) from exc


def parse_flow_file(text: str) -> FlowGraph:
    """Parse flow-file text into a validated FlowGraph.

    Raises FlowParseError with line/column on syntax errors and ValueError
    listing the diagnostics when the parsed graph violates an invariant.
    """
    graph = _Parser(text).parse_graph()
    diags = validate(graph)
    if diags:
        raise ValueError("invalid flow graph: " + "; ".join(diags))
    return graph


# ---------------------------------------------------------------------------
# serialization


def serialize_flow_file(g: FlowGraph) -> str:
    """Canonical text form: sorted flow names, two-space indentation, exact
    values, probabilities at 9 significant digits.  parse(serialize(g)) is
    structurally identical to g."""
    diags = validate(g)
    if diags:
        raise ValueError("invalid flow graph: " + "; ".join(diags))
    header = f"flowgraph entry={g.entry}"
    if g.deadline is not None:
        header += f" deadline={format_number(g.deadline)}"
    if g.confidence is not None:
        header += f" confidence={g.confidence:.9g}"
    lines = [header]
    for name in sorted(g.flows):
        lines.append(f"flow {name} {{")
        _write_node(g.flows[name], lines, 1)
        lines.append("}")
    return "\n".join(lines) + "\n"


def _write_node(node: FlowNode, lines: list[str], depth: int, prefix: str = "") -> None:
    pad = "  " * depth
    if isinstance(node, TaskNode):
        parts = [
            f"task {node.id}",
            f"time={format_pmf_literal(node.time)}",
            f"power={format_pmf_literal(node.power)}",
            f"cycles={node.cycles}",
        ]
        if node.scalable:
            parts.append("scalable")
        if node.label != node.id:
            parts.append(f'label="{node.label}"')
        lines.append(pad + prefix + " ".join(parts))
    elif isinstance(node, (Sequence, AndGroup, Race)):
        lines.append(pad + prefix + _KIND_NAMES[type(node)] + " {")
        for child in node.children:
            _write_node(child, lines, depth + 1)
        lines.append(pad + "}")
    elif isinstance(node, Branch):
        lines.append(pad + prefix + "branch {")
        for prob, child in node.arms:
            _write_node(child, lines, depth + 1, prefix=f"{prob:.9g}: ")
        lines.append(pad + "}")
    else:
        lines.append(pad + prefix + f"sub {node.name}")


# ---------------------------------------------------------------------------
# structural comparison (tolerant on probabilities, used by round-trip laws)


def _pmfs_close(a: Pmf, b: Pmf, tol: float) -> bool:
    if a.unit is not b.unit or len(a) != len(b):
        return False
    return all(
        math.isclose(va, vb, rel_tol=tol, abs_tol=tol)
        and math.isclose(pa, pb, rel_tol=tol, abs_tol=tol)
        for (va, pa), (vb, pb) in zip(a.points, b.points)
    )


def _nodes_equal(a: FlowNode, b: FlowNode, tol: float) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, TaskNode):
        return (
            a.id == b.id
            and a.label == b.label
            and a.cycles == b.cycles
            and a.scalable == b.scalable
            and _pmfs_close(a.time, b.time, tol)
            and _pmfs_close(a.power, b.power, tol)
        )
    if isinstance(a, (Sequence, AndGroup, Race)):
        return len(a.children) == len(b.children) and all(
            _nodes_equal(x, y, tol) for x, y in zip(a.children, b.children)
        )
    if isinstance(a, Branch):
        return len(a.arms) == len(b.arms) and all(
            math.isclose(pa, pb, rel_tol=tol, abs_tol=tol) and _nodes_equal(x, y, tol)
            for (pa, x), (pb, y) in zip(a.arms, b.arms)
        )
    return a.name == b.name


def graphs_equal(a: FlowGraph, b: FlowGraph, tol: float = 1e-9) -> bool:
    """Structural equality, comparing probabilities within `tol` so that the
    9-significant-digit canonical form round-trips."""
    def opt_close(x: float | None, y: float | None) -> bool:
        if (x is None) != (y is None):
            return False
        return x is None or math.isclose(x, y, rel_tol=tol, abs_tol=tol)

    return (
        a.entry == b.entry
        and opt_close(a.deadline, b.deadline)
        and opt_close(a.confidence, b.confidence)
        and set(a.flows) == set(b.flows)
        and all(_nodes_equal(a.flows[n], b.flows[n], tol) for n in a.flows)
    )
