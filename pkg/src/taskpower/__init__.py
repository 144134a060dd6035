"""Stochastic time/power estimation and energy-aware scheduling for
embedded-software task graphs.

The package models task graphs as hierarchical flows whose leaves carry
discrete time and power distributions, composes whole-graph distributions
analytically, extracts flows from a scheduled block-level IR, and searches
voltage assignments and multiprocessor schedules under soft deadlines.
"""

from .analysis import AnalysisReport, analyze, branch_probs_from_profile, power_pmf, time_pmf
from .extractor import FuLibrary, IrProgram, extract_flow, parse_fu_library, parse_ir
from .flowgraph import (
    AndGroup,
    Branch,
    FlowGraph,
    Race,
    Sequence,
    SubflowRef,
    TaskNode,
    flatten,
    parse_flow_file,
    serialize_flow_file,
    validate,
)
from .pmf import (
    Pmf,
    Transmittance,
    Unit,
    cdf_at,
    convolve_sum,
    delta,
    expectation,
    make_pmf,
    max_pmf,
    min_pmf,
    mixture,
    most_probable,
    rebin,
    scale,
    std_dev,
)
from .scheduler import (
    AssignmentResult,
    InfeasibleError,
    MultiprocSchedule,
    VoltageLevel,
    edf_order,
    energy_savings_theoretical,
    enumerate_assignments,
    latest_finish_times,
    min_processors,
    multiproc_schedule,
    scale_task,
    slowdown_cycles,
)

__version__ = "0.1.0"
