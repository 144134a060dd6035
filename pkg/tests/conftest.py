"""Shared fixtures: canned flow files, voltage levels, and a seeded random
graph generator used by the oracle-equivalence suites."""

from __future__ import annotations

import random

import pytest

from taskpower.flowgraph import FlowGraph, TaskNode, parse_flow_file
from taskpower.flowgraph import AndGroup, Branch, Race, Sequence
from taskpower.oracle import outcome_count
from taskpower.pmf import Unit, make_pmf
from taskpower.scheduler import VoltageLevel

FLOW_FULL = """
flowgraph entry=main deadline=966 confidence=0.95
flow main {
  seq {
    task t1 time={10:0.5, 12:0.5} power={40:1.0} cycles=10 scalable
    and {
      task t2 time={5:1.0} power={30:1.0} cycles=5 scalable
      sub helper
    }
    branch {
      0.3: task t4 time={8:1.0} power={25:1.0} cycles=8
      0.7: task t5 time={2:1.0} power={25:1.0} cycles=2
    }
    race {
      task t6 time={4:0.5, 9:0.5} power={10:1.0} cycles=4
      task t7 time={6:1.0} power={12:1.0} cycles=6
    }
  }
}
flow helper { task h1 time={3:1.0} power={20:1.0} cycles=3 }
"""

FLOW_SINGLE = """
flowgraph entry=main deadline=10
flow main { task only time={10:1.0} power={5:1.0} cycles=10 scalable }
"""

FLOW_CHAIN4 = """
flowgraph entry=main deadline=30
flow main {
  seq {
    task a time={5:1.0} power={40:1.0} cycles=5 scalable
    task b time={5:1.0} power={35:1.0} cycles=5 scalable
    task c time={5:1.0} power={30:1.0} cycles=5 scalable
    task d time={5:1.0} power={25:1.0} cycles=5 scalable
  }
}
"""

FLOW_DECODE = """
flowgraph entry=main deadline=450 confidence=1.0
flow main {
  and {
    task u time={375:1.0} power={50:1.0} cycles=375 scalable
    task v time={375:1.0} power={60:1.0} cycles=375 scalable
  }
}
"""

FLOW_FORK_JOIN = """
flowgraph entry=main deadline=40 confidence=1.0
flow main {
  seq {
    task head time={4:1.0} power={20:1.0} cycles=4 scalable
    and {
      task w1 time={12:1.0} power={30:1.0} cycles=12 scalable
      task w2 time={11:1.0} power={28:1.0} cycles=11 scalable
      task w3 time={10:1.0} power={26:1.0} cycles=10 scalable
      task w4 time={9:1.0} power={24:1.0} cycles=9 scalable
    }
    task tail time={4:1.0} power={22:1.0} cycles=4 scalable
  }
}
"""

FLOW_STOCHASTIC = """
flowgraph entry=main deadline=30 confidence=0.8
flow main {
  seq {
    task s1 time={4:0.25, 6:0.5, 8:0.25} power={12:0.5, 18:0.5} cycles=6 scalable
    branch {
      0.4: task fast time={2:0.7, 3:0.3} power={9:1.0} cycles=2
      0.6: seq {
        task slow1 time={5:0.5, 7:0.5} power={20:0.4, 24:0.6} cycles=6
        task slow2 time={2:1.0} power={14:1.0} cycles=2
      }
    }
    race {
      task r1 time={3:0.5, 8:0.5} power={11:1.0} cycles=3
      task r2 time={4:0.6, 6:0.4} power={16:0.5, 17:0.5} cycles=4
    }
  }
}
"""

FIXTURE_FLOWS = {
    "full": FLOW_FULL,
    "single": FLOW_SINGLE,
    "chain4": FLOW_CHAIN4,
    "decode": FLOW_DECODE,
    "fork_join": FLOW_FORK_JOIN,
    "stochastic": FLOW_STOCHASTIC,
}

IR_TEXT = """
block BB1
  op ialu @0
  op ialu @0
  op imul @1
  succ BB2:30 BB3:70
block BB2
  op ld @0
  succ BB4:30
block BB3
  op ialu @0
  succ BB4:70
block BB4
  op st @0
"""

FU_TEXT = """
fu ialu delay=1 energy={38:0.2, 41:0.6, 45:0.2}
fu imul delay=3 energy={120:0.5, 140:0.5}
fu ld delay=2 energy={60:1.0}
fu st delay=2 energy={55:1.0}
"""

LEVELS_TEXT = """
level high voltage=1.8 v_scale=1.0 f_scale=1.0
level low  voltage=0.9 v_scale=0.5 f_scale=1.0
"""


@pytest.fixture
def levels2() -> list[VoltageLevel]:
    return [
        VoltageLevel("high", 1.8, 1.0, 1.0),
        VoltageLevel("low", 0.9, 0.5, 1.0),  # energy x0.25, delay x2
    ]


@pytest.fixture(params=sorted(FIXTURE_FLOWS))
def fixture_graph(request) -> FlowGraph:
    return parse_flow_file(FIXTURE_FLOWS[request.param])


# ---------------------------------------------------------------------------
# random graph generation


def random_pmf(rng: random.Random, unit: Unit, max_points: int = 4):
    n = rng.randint(1, max_points)
    values = rng.sample([k * 0.5 for k in range(1, 41)], n)
    return make_pmf([(v, rng.randint(1, 5)) for v in values], unit)


def random_task(rng: random.Random, counter: list[int]) -> TaskNode:
    counter[0] += 1
    label = rng.choice(["", "int alu", "mul 2x", "load/store"])
    return TaskNode(
        id=f"t{counter[0]}",
        time=random_pmf(rng, Unit.CYCLES),
        power=random_pmf(rng, Unit.MICROWATTS),
        cycles=rng.randint(1, 10),
        scalable=rng.random() < 0.5,
        label=label,
    )


def random_node(rng: random.Random, depth: int, counter: list[int], subs: list[str]):
    if depth == 0 or rng.random() < 0.35:
        if subs and rng.random() < 0.25:
            from taskpower.flowgraph import SubflowRef

            return SubflowRef(rng.choice(subs))
        return random_task(rng, counter)
    kind = rng.choice(["seq", "and", "race", "branch"])
    arity = rng.randint(2, 3)
    children = [random_node(rng, depth - 1, counter, subs) for _ in range(arity)]
    if kind == "branch":
        weights = [rng.randint(1, 5) for _ in children]
        total = sum(weights)
        return Branch(tuple((w / total, c) for w, c in zip(weights, children)))
    cls = {"seq": Sequence, "and": AndGroup, "race": Race}[kind]
    return cls(tuple(children))


def random_graph(seed: int, max_outcomes: int = 100_000,
                 with_subflows: bool = False) -> FlowGraph:
    """Deterministic random fixture graph kept under the enumeration cap."""
    rng = random.Random(seed)
    while True:
        counter = [0]
        flows = {}
        subs: list[str] = []
        if with_subflows:
            for i in range(rng.randint(1, 2)):
                name = f"helper{i}"
                flows[name] = random_node(rng, depth=1, counter=counter, subs=[])
                subs.append(name)
        flows["main"] = random_node(rng, depth=3, counter=counter, subs=subs)
        graph = FlowGraph(flows=flows, entry="main")
        from taskpower.flowgraph import flatten

        if outcome_count(flatten(graph)) <= max_outcomes:
            return graph
