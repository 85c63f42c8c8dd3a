"""Recursive logit route choice with a degree-of-choice-aversion penalty."""

from rlca.network import Edge, Network, NetworkError, Path, load_network, parse_network
from rlca.solver import (
    FlowSolution,
    InfeasibleValueError,
    Parameters,
    ValueSolution,
    assign_flows,
    solve,
    solve_values,
)

__all__ = [
    "Edge",
    "FlowSolution",
    "InfeasibleValueError",
    "Network",
    "NetworkError",
    "Parameters",
    "Path",
    "ValueSolution",
    "assign_flows",
    "load_network",
    "parse_network",
    "solve",
    "solve_values",
]
