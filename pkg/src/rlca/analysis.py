"""Welfare, its sensitivities, and the edge removal / addition tests."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from rlca.fixtures import braess_pair
from rlca.network import Edge, Network, NetworkError, enumerate_paths
from rlca.paths import path_probabilities
from rlca.solver import Parameters, assign_flows, solve, solve_values

SCAN_HEADER = ("sweep", "welfare_before", "welfare_after", "delta")


def welfare(
    net: Network, params: Parameters, origin: str | None = None, dest: str | None = None
) -> float:
    """Expected maximum utility at the origin: log-sum of origin edge values."""
    origin = net.resolve_origin(origin)
    values = solve_values(net, params, dest)
    w = values.logsum[net.node_index[origin]]
    if not math.isfinite(w):
        raise NetworkError(f"origin {origin!r} cannot reach {values.dest!r}")
    return float(w)


def welfare_grad_utility(
    net: Network, params: Parameters, origin: str | None = None, dest: str | None = None
) -> dict[str, float]:
    """dW/du_a, which is the expected flow on ``a`` under unit demand."""
    _, flows = solve(net, params, origin, dest)
    plan = net.plan(flows.dest)
    return {e.id: float(flows.edge_flows[k]) for k, e in enumerate(net.edges) if plan.edge_active[k]}


def welfare_grad_kappa(
    net: Network,
    params: Parameters,
    node: str,
    origin: str | None = None,
    dest: str | None = None,
) -> float:
    """dW/dkappa_i.

    Only visits that arrive over an edge pay node ``i``'s penalty, so the
    unit demand loaded at the origin is excluded from ``x_i``.
    """
    origin = net.resolve_origin(origin)
    _, flows = solve(net, params, origin, dest)
    i = net.node_index[node]
    arrivals = flows.node_visits[i] - (1.0 if node == origin else 0.0)
    return float(-arrivals * net.plan(flows.dest).log_degree[i])


# edge removal -----------------------------------------------------------------


@dataclass(frozen=True)
class PathChange:
    label: str
    before: float
    after: float  # nan when the path uses the removed edge

    @property
    def pct_change(self) -> float:
        return 100.0 * (self.after - self.before) / self.before


@dataclass(frozen=True)
class RegularityReport:
    node: str
    removed_edge: str
    threshold: float
    kappa_at_node: float
    violated: bool
    through_before: float  # P(R_i)
    through_surviving: float  # P(R_ia), pre-removal
    outside_before: float  # P(R_i^c)
    outside_after: float
    paths: tuple[PathChange, ...] = ()

    @property
    def outside_change(self) -> float:
        return self.outside_after - self.outside_before


def regularity_threshold(
    net: Network,
    params: Parameters,
    node: str,
    edge: str,
    origin: str | None = None,
    dest: str | None = None,
    max_paths: int = 10_000,
) -> RegularityReport:
    """Smallest ``kappa_i`` above which removing ``edge`` lowers the paths avoiding ``node``.

    The threshold uses probabilities at the configured ``params``. On
    acyclic networks ``x_i`` is the probability of crossing ``node``.
    """
    origin = net.resolve_origin(origin)
    dest = net.resolve_dest(dest)
    if net.edge(edge).tail != node:
        raise NetworkError(f"edge {edge!r} does not leave {node!r}")
    if node in (origin, dest):
        raise NetworkError("regularity test needs an interior node")
    plan = net.plan(dest)
    i = net.node_index[node]
    n = int(plan.out_degree[i])
    if not plan.edge_active[net.edge_index[edge]]:
        raise NetworkError(f"edge {edge!r} cannot reach {dest!r}")
    if n < 2:
        raise NetworkError(f"{node!r} has a single outgoing edge; removal would disconnect it")

    values, flows = solve(net, params, origin, dest)
    x_i = flows.node_visits[i]
    f_a = flows.edge_flows[net.edge_index[edge]]
    if x_i <= 0:
        raise NetworkError(f"{node!r} carries no flow")
    threshold = math.log(x_i / (x_i - f_a)) / math.log(n / (n - 1))
    kappa_i = params.kappa_at(node)

    reduced = net.without_edges([edge])
    _, flows_after = solve(reduced, params, origin, dest)
    x_after = flows_after.node_visits[reduced.node_index[node]]

    changes: tuple[PathChange, ...] = ()
    if plan.acyclic:
        paths, overflow = enumerate_paths(net, origin, dest, max_paths=max_paths)
        if not overflow:
            before = path_probabilities(net, params, paths)
            kept = [p for p in paths if edge not in p.edges]
            after = path_probabilities(reduced, params, kept)
            changes = tuple(
                PathChange(p.label, before[p], after.get(p, math.nan)) for p in paths
            )

    return RegularityReport(
        node=node,
        removed_edge=edge,
        threshold=threshold,
        kappa_at_node=kappa_i,
        violated=kappa_i > threshold,
        through_before=float(x_i),
        through_surviving=float(x_i - f_a),
        outside_before=float(1.0 - x_i),
        outside_after=float(1.0 - x_after),
        paths=changes,
    )


# edge addition ----------------------------------------------------------------


@dataclass(frozen=True)
class EdgeAdditionReport:
    node: str
    new_edge: str
    lhs: float
    rhs: float
    welfare_before: float
    welfare_after: float

    @property
    def improves(self) -> bool:
        return self.lhs > self.rhs

    @property
    def delta(self) -> float:
        return self.welfare_after - self.welfare_before


def edge_addition_test(
    net: Network,
    params: Parameters,
    node: str,
    new_edge: Edge,
    origin: str | None = None,
    dest: str | None = None,
) -> EdgeAdditionReport:
    """Does adding ``new_edge`` at ``node`` raise welfare?

    Compares the new edge's choice probability with
    ``1 - (n / (n + 1)) ** kappa_i`` and reports both welfare levels.
    """
    origin = net.resolve_origin(origin)
    dest = net.resolve_dest(dest)
    if new_edge.tail != node:
        raise NetworkError(f"new edge {new_edge.id!r} must leave {node!r}")
    if node in (origin, dest):
        raise NetworkError("edge addition test needs an interior node")
    plan = net.plan(dest)
    head = net.node_index.get(new_edge.head)
    if head is None or not plan.node_active[head]:
        raise NetworkError(f"head {new_edge.head!r} of the new edge cannot reach {dest!r}")
    i = net.node_index[node]
    n = int(plan.out_degree[i])
    if not plan.node_active[i]:
        raise NetworkError(f"{node!r} cannot reach {dest!r}")

    extended = net.with_edges([new_edge])
    values = solve_values(extended, params, dest)
    lhs = float(values.probability_array()[extended.edge_index[new_edge.id]])
    rhs = 1.0 - (n / (n + 1)) ** params.kappa_at(node)
    return EdgeAdditionReport(
        node=node,
        new_edge=new_edge.id,
        lhs=lhs,
        rhs=rhs,
        welfare_before=welfare(net, params, origin, dest),
        welfare_after=float(values.logsum[extended.node_index[origin]]),
    )


# Braess family ----------------------------------------------------------------


@dataclass(frozen=True)
class ScanRow:
    sweep: float
    welfare_before: float
    welfare_after: float

    @property
    def delta(self) -> float:
        return self.welfare_after - self.welfare_before


def braess_delta(x: float, kappa: float) -> ScanRow:
    before, after = braess_pair(x)
    params = Parameters((-1.0,), kappa=kappa)
    return ScanRow(math.nan, welfare(before, params), welfare(after, params))


def braess_scan(
    sweep: Iterable[float], over: str = "x", x: float = 0.0, kappa: float = 1.0
) -> list[ScanRow]:
    """Welfare before/after adding the free connector, sweeping ``x`` or ``kappa``."""
    rows = []
    for s in sweep:
        if over == "x":
            r = braess_delta(s, kappa)
        elif over == "kappa":
            r = braess_delta(x, s)
        else:
            raise ValueError(f"sweep must be over 'x' or 'kappa', not {over!r}")
        rows.append(ScanRow(float(s), r.welfare_before, r.welfare_after))
    return rows


def braess_kappa_threshold(x: float) -> float:
    """Closed-form kappa at which the connector stops improving welfare."""
    return math.log1p(math.exp(1.0 - x)) / math.log(2.0)


def braess_delta_root(x: float, hi: float = 50.0) -> float:
    """Kappa where the solver's welfare change crosses zero."""
    return brentq(lambda k: braess_delta(x, k).delta, 0.0, hi, xtol=1e-13, rtol=1e-14)


def scan_csv(rows: Sequence[ScanRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_HEADER)
    for r in rows:
        w.writerow([repr(r.sweep), repr(r.welfare_before), repr(r.welfare_after), repr(r.delta)])
    return buf.getvalue()


def grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)
