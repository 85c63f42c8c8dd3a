"""Recursive values, edge choice probabilities and expected flows.

Values follow the logsum recursion with a choice-set penalty at the head of
every edge::

    V_a = u_a + log(sum_{a' leaving j} exp(V_a')) - kappa_j * log(outdeg_j)

with ``V_a = u_a`` for edges entering the destination. Choice probabilities
at a node are the softmax of ``V`` over its outgoing edges.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from rlca import _backend
from rlca.network import DestinationPlan, Edge, Network, NetworkError


class InfeasibleValueError(ArithmeticError):
    """The value system has no positive solution (cycles too attractive)."""


@dataclass(frozen=True)
class Parameters:
    """Edge-attribute coefficients and per-node choice aversion.

    ``kappa`` is the default degree of choice aversion; ``kappa_nodes``
    overrides it node by node. The Gumbel scale is fixed at 1.
    """

    beta: tuple[float, ...]
    kappa: float = 0.0
    kappa_nodes: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in np.atleast_1d(self.beta)))
        object.__setattr__(self, "kappa_nodes", dict(self.kappa_nodes))
        for v in (self.kappa, *self.kappa_nodes.values()):
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"kappa must be finite and >= 0, got {v}")

    def kappa_at(self, node: str) -> float:
        return self.kappa_nodes.get(node, self.kappa)

    def kappa_vector(self, net: Network) -> np.ndarray:
        unknown = set(self.kappa_nodes) - set(net.node_index)
        if unknown:
            raise NetworkError(f"kappa given for unknown node {sorted(unknown)[0]!r}")
        return np.array([self.kappa_at(n) for n in net.nodes])

    def replace(self, **changes) -> Parameters:
        data = {"beta": self.beta, "kappa": self.kappa, "kappa_nodes": self.kappa_nodes}
        data.update(changes)
        return Parameters(**data)

    def with_node_kappa(self, node: str, value: float) -> Parameters:
        return self.replace(kappa_nodes={**self.kappa_nodes, node: value})


@dataclass(frozen=True)
class ValueSolution:
    """Recursive edge values for one destination.

    ``values`` and ``logsum`` are aligned with ``net.edges``/``net.nodes``;
    edges pruned for this destination hold ``-inf``. ``logsum`` is the plain
    node logsum, ``adjusted`` subtracts the choice-set penalty (zero at the
    destination).
    """

    net: Network
    dest: str
    values: np.ndarray
    logsum: np.ndarray
    adjusted: np.ndarray
    method: str

    @property
    def V(self) -> dict[str, float]:
        plan = self.net.plan(self.dest)
        return {
            e.id: float(self.values[k])
            for k, e in enumerate(self.net.edges)
            if plan.edge_active[k]
        }

    @property
    def adjusted_logsum(self) -> dict[str, float]:
        plan = self.net.plan(self.dest)
        return {
            n: float(self.adjusted[i]) for i, n in enumerate(self.net.nodes) if plan.node_active[i]
        }

    def probability_array(self) -> np.ndarray:
        """Edge choice probabilities aligned with ``net.edges`` (0 when pruned)."""
        plan = self.net.plan(self.dest)
        p = np.zeros(len(self.values))
        act = plan.edge_active
        p[act] = np.exp(self.values[act] - self.logsum[self.net.tail_index[act]])
        return p


@dataclass(frozen=True)
class FlowSolution:
    net: Network
    dest: str
    node_visits: np.ndarray
    edge_flows: np.ndarray
    edge_probs: np.ndarray

    @property
    def x(self) -> dict[str, float]:
        return dict(zip(self.net.nodes, map(float, self.node_visits)))

    @property
    def f(self) -> dict[str, float]:
        return {e.id: float(v) for e, v in zip(self.net.edges, self.edge_flows)}

    @property
    def P(self) -> dict[str, float]:
        return {e.id: float(v) for e, v in zip(self.net.edges, self.edge_probs)}


def edge_utility(params: Parameters, edge: Edge) -> float:
    if len(params.beta) != len(edge.attrs):
        raise ValueError(
            f"beta has {len(params.beta)} entries but edge {edge.id!r} has "
            f"{len(edge.attrs)} attributes"
        )
    u = float(np.dot(params.beta, edge.attrs))
    if not math.isfinite(u):
        raise ValueError(f"non-finite utility on edge {edge.id!r}")
    return u


def utilities(net: Network, params: Parameters) -> np.ndarray:
    if len(params.beta) != len(net.attr_names):
        raise ValueError(
            f"beta has {len(params.beta)} entries, network has {len(net.attr_names)} attributes"
        )
    return net.attr_matrix @ np.asarray(params.beta, dtype=float)


def node_penalty(net: Network, params: Parameters, dest: str) -> np.ndarray:
    """``kappa_i * log(outdeg_i)`` on the network pruned to ``dest``."""
    kap = params.kappa_vector(net)
    if net.origin is not None and net.origin in params.kappa_nodes:
        warnings.warn(
            f"kappa set on origin {net.origin!r}: it only affects edges entering the origin",
            stacklevel=3,
        )
    return kap * net.plan(dest).log_degree


# value solvers -------------------------------------------------------------


def _check_u(net: Network, u: np.ndarray) -> np.ndarray:
    u = np.ascontiguousarray(u, dtype=float)
    if u.shape != (len(net.edges),):
        raise ValueError("utility vector does not match the edge count")
    return u


def values_acyclic(net: Network, dest: str, u: np.ndarray, penalty: np.ndarray):
    """Backward recursion in index space; returns ``(V, phi)``."""
    plan = net.plan(dest)
    if not plan.acyclic:
        raise NetworkError("network has a directed cycle; use the linear-system solver")
    return _backend.values_backward(
        _check_u(net, u),
        np.ascontiguousarray(penalty, dtype=float),
        plan.backward_order,
        plan.out_ptr,
        plan.out_edges,
        net.head_index,
        plan.dest,
    )


def values_linear(net: Network, dest: str, u: np.ndarray, penalty: np.ndarray):
    """Solve the value system as a sparse linear system in ``z = exp(V)``."""
    plan = net.plan(dest)
    u = _check_u(net, u)
    act = np.flatnonzero(plan.edge_active)
    pos = np.full(len(net.edges), -1, dtype=np.int64)
    pos[act] = np.arange(len(act))
    head = net.head_index

    rows, cols, vals = [], [], []
    rhs = np.zeros(len(act))
    for r, k in enumerate(act):
        j = head[k]
        if j == plan.dest:
            rhs[r] = math.exp(u[k])
            continue
        w = math.exp(u[k] - penalty[j])
        for k2 in plan.out_edges[plan.out_ptr[j] : plan.out_ptr[j + 1]]:
            rows.append(r)
            cols.append(pos[k2])
            vals.append(w)
    n_act = len(act)
    W = sp.csr_matrix((vals, (rows, cols)), shape=(n_act, n_act))
    A = (sp.identity(n_act, format="csr") - W).tocsc()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        z = np.atleast_1d(spsolve(A, rhs))
    resid = np.abs(A @ z - rhs).max() if n_act else 0.0
    if (
        not np.all(np.isfinite(z))
        or np.any(z <= 0)
        or resid > 1e-10 * (1.0 + np.abs(z).max())
    ):
        raise InfeasibleValueError("value system infeasible: cycles too attractive")

    V = np.full(len(net.edges), -np.inf)
    V[act] = np.log(z)
    phi = np.full(len(net.nodes), -np.inf)
    phi[plan.dest] = 0.0
    for i in np.flatnonzero(plan.node_active):
        ks = plan.out_edges[plan.out_ptr[i] : plan.out_ptr[i + 1]]
        if len(ks):
            v = V[ks]
            vmax = v.max()
            phi[i] = vmax + math.log(np.exp(v - vmax).sum())
    return V, phi


def _solution(net, dest, V, phi, penalty, method) -> ValueSolution:
    adjusted = phi - penalty
    adjusted[net.plan(dest).dest] = 0.0
    return ValueSolution(net, dest, V, phi, adjusted, method)


def solve_values_acyclic(net: Network, params: Parameters, dest: str | None = None) -> ValueSolution:
    dest = net.resolve_dest(dest)
    pen = node_penalty(net, params, dest)
    V, phi = values_acyclic(net, dest, utilities(net, params), pen)
    return _solution(net, dest, V, phi, pen, "backward")


def solve_values_cyclic(net: Network, params: Parameters, dest: str | None = None) -> ValueSolution:
    dest = net.resolve_dest(dest)
    pen = node_penalty(net, params, dest)
    V, phi = values_linear(net, dest, utilities(net, params), pen)
    return _solution(net, dest, V, phi, pen, "linear-system")


def solve_values(net: Network, params: Parameters, dest: str | None = None) -> ValueSolution:
    """Backward recursion when the pruned network is acyclic, else the linear system."""
    dest = net.resolve_dest(dest)
    if net.plan(dest).acyclic:
        return solve_values_acyclic(net, params, dest)
    return solve_values_cyclic(net, params, dest)


def edge_choice_probabilities(net: Network, values: ValueSolution) -> dict[str, float]:
    plan = net.plan(values.dest)
    p = values.probability_array()
    return {e.id: float(p[k]) for k, e in enumerate(net.edges) if plan.edge_active[k]}


# flows ---------------------------------------------------------------------


def propagate(net: Network, dest: str, prob: np.ndarray, x0: np.ndarray):
    """Expected node visits and edge flows for initial node demand ``x0``."""
    plan = net.plan(dest)
    prob = np.ascontiguousarray(prob, dtype=float)
    x0 = np.ascontiguousarray(x0, dtype=float)
    if plan.acyclic:
        return _backend.flows_forward(
            prob, x0, plan.order, plan.out_ptr, plan.out_edges, net.head_index
        )
    return _flows_linear(net, plan, prob, x0)


def _flows_linear(net: Network, plan: DestinationPlan, prob, x0):
    nodes = np.flatnonzero(plan.node_active & (np.arange(len(net.nodes)) != plan.dest))
    pos = np.full(len(net.nodes), -1, dtype=np.int64)
    pos[nodes] = np.arange(len(nodes))
    act = np.flatnonzero(plan.edge_active)
    tail, head = net.tail_index[act], net.head_index[act]
    inner = head != plan.dest
    # x_j - sum_{k: tail i -> head j} P_k x_i = x0_j
    T = sp.csr_matrix(
        (prob[act][inner], (pos[head[inner]], pos[tail[inner]])),
        shape=(len(nodes), len(nodes)),
    )
    A = (sp.identity(len(nodes), format="csr") - T).tocsc()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        xs = np.atleast_1d(spsolve(A, x0[nodes]))
    if not np.all(np.isfinite(xs)):
        raise InfeasibleValueError("flow system is singular")
    x = np.zeros(len(net.nodes))
    x[nodes] = xs
    f = np.zeros(len(net.edges))
    f[act] = x[tail] * prob[act]
    x[plan.dest] = x0[plan.dest] + f[act][~inner].sum()
    return x, f


def assign_flows(
    net: Network,
    probs: Mapping[str, float] | np.ndarray | ValueSolution,
    origin: str | None = None,
    demand: float = 1.0,
    dest: str | None = None,
) -> FlowSolution:
    """Load ``demand`` at ``origin`` and propagate it to the destination."""
    if isinstance(probs, ValueSolution):
        dest = probs.dest
        p = probs.probability_array()
    elif isinstance(probs, np.ndarray):
        p = probs.astype(float)
    else:
        p = np.array([probs.get(e.id, 0.0) for e in net.edges], dtype=float)
    dest = net.resolve_dest(dest)
    origin = net.resolve_origin(origin)
    plan = net.plan(dest)
    o = net.node_index[origin]
    if not plan.node_active[o]:
        raise NetworkError(f"origin {origin!r} cannot reach {dest!r}")
    x0 = np.zeros(len(net.nodes))
    x0[o] = demand
    x, f = propagate(net, dest, p, x0)
    return FlowSolution(net, dest, x, f, p)


def solve(
    net: Network,
    params: Parameters,
    origin: str | None = None,
    dest: str | None = None,
    demand: float = 1.0,
) -> tuple[ValueSolution, FlowSolution]:
    values = solve_values(net, params, dest)
    return values, assign_flows(net, values, origin, demand)


def origin_demand_vector(net: Network, demands: Mapping[str, float] | Sequence) -> np.ndarray:
    x0 = np.zeros(len(net.nodes))
    for node, d in dict(demands).items():
        x0[net.node_index[node]] += d
    return x0
