"""Path-level utilities and probabilities.

A path ``r`` has utility ``U_r = u_r - rho_r`` where ``rho_r`` sums the
choice-set penalty ``kappa_j * log|A_j^+|`` at every head node ``j`` of the
path except the destination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from rlca.network import Network, NetworkError, Path, check_path, enumerate_paths, path_nodes
from rlca.solver import Parameters, solve_values, utilities


@dataclass(frozen=True)
class PathEvaluation:
    path: Path
    u_r: float
    rho_r: float
    U_r: float
    gamma_r: float


def _dest_of(net: Network, path: Path) -> str:
    return net.edge(path.edges[-1]).head


def evaluate_path(
    net: Network, params: Parameters, path: Path | Sequence[str], dest: str | None = None
) -> PathEvaluation:
    path = check_path(net, path)
    dest = dest or _dest_of(net, path)
    logdeg = net.plan(dest).log_degree
    kap = params.kappa_vector(net)
    u = utilities(net, params)
    u_r = rho = gamma = 0.0
    for eid in path:
        k = net.edge_index[eid]
        u_r += u[k]
        j = net.head_index[k]
        gamma += logdeg[j]
        rho += kap[j] * logdeg[j]
    return PathEvaluation(path, u_r, rho, u_r - rho, gamma)


def _as_paths(net: Network, paths: Iterable[Path | Sequence[str]] | None, params=None) -> list[Path]:
    if paths is None:
        return enumerate_paths(net).paths
    out = [check_path(net, p) for p in paths]
    if not out:
        raise ValueError("empty path set")
    return out


def path_probabilities(
    net: Network,
    params: Parameters,
    paths: Iterable[Path | Sequence[str]] | None = None,
    method: str = "recursive",
) -> dict[Path, float]:
    """Choice probability of each path.

    ``recursive`` multiplies edge choice probabilities and needs no path
    enumeration beyond the paths asked for. ``closed_form`` takes the softmax
    of ``U_r`` and is only meaningful over the full path set.
    """
    paths = _as_paths(net, paths)
    dest = _dest_of(net, paths[0])
    if method == "recursive":
        probs = solve_values(net, params, dest).probability_array()
        return {p: path_probability_recursive(net, p, probs) for p in paths}
    if method == "closed_form":
        U = np.array([evaluate_path(net, params, p, dest).U_r for p in paths])
        w = np.exp(U - U.max())
        return dict(zip(paths, w / w.sum()))
    raise ValueError(f"unknown method {method!r}")


def path_probability_recursive(
    net: Network, path: Path | Sequence[str], edge_probs: np.ndarray | dict
) -> float:
    """Product of edge choice probabilities along ``path``."""
    prob = 1.0
    for eid in path:
        if isinstance(edge_probs, dict):
            prob *= edge_probs.get(eid, 0.0)
        else:
            prob *= edge_probs[net.edge_index[eid]]
    return float(prob)


def probability_ratio(
    net: Network, params: Parameters, r: Path | Sequence[str], r2: Path | Sequence[str]
) -> float:
    """``P_r / P_r2`` from the closed form; needs no normalisation."""
    a, b = evaluate_path(net, params, r), evaluate_path(net, params, r2)
    return math.exp(a.U_r - b.U_r)


def paths_through(net: Network, paths: Iterable[Path], node: str) -> list[Path]:
    return [p for p in paths if node in path_nodes(net, p)[1:-1]]


def prefix_logsum(
    net: Network, params: Parameters, node: str, paths: Sequence[Path], dest: str | None = None
) -> float:
    """Log-sum of utilities of the distinct origin-to-``node`` prefixes.

    The prefix treats ``node`` as its end point, so ``node``'s own penalty is
    not charged.
    """
    dest = dest or _dest_of(net, paths[0])
    logdeg = net.plan(dest).log_degree
    kap = params.kappa_vector(net)
    u = utilities(net, params)
    prefixes: set[tuple[str, ...]] = set()
    for p in paths:
        nodes = path_nodes(net, p)
        if node in nodes[1:-1]:
            prefixes.add(p.edges[: nodes.index(node)])
    if not prefixes:
        raise NetworkError(f"no path crosses {node!r}")
    vals = []
    for pre in prefixes:
        total = 0.0
        for pos, eid in enumerate(pre):
            k = net.edge_index[eid]
            total += u[k]
            if pos < len(pre) - 1:
                j = net.head_index[k]
                total -= kap[j] * logdeg[j]
        vals.append(total)
    vals = np.array(vals)
    m = vals.max()
    return float(m + math.log(np.exp(vals - m).sum()))


def through_node_logsum(net: Network, params: Parameters, node: str, paths: Sequence[Path]) -> float:
    """Log-sum of ``U_r`` over the paths that cross ``node``."""
    U = np.array([evaluate_path(net, params, p).U_r for p in paths_through(net, paths, node)])
    if not len(U):
        raise NetworkError(f"no path crosses {node!r}")
    m = U.max()
    return float(m + math.log(np.exp(U - m).sum()))
