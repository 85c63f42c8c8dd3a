"""Directed network model, file parsing and topology utilities.

A network file is line based (UTF-8, ``#`` starts a comment)::

    ATTRS cost
    EDGE a1 s i1 1.9
    EDGE a2 s t 2.0
    ORIGIN s
    DEST t

Nodes are declared implicitly by ``EDGE`` lines unless the file contains
``NODE`` lines, in which case every edge endpoint must be declared.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path as FsPath
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class NetworkError(ValueError):
    """Raised for malformed networks, paths or unreachable destinations."""


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    attrs: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attrs", tuple(float(v) for v in self.attrs))
        if not all(math.isfinite(v) for v in self.attrs):
            raise NetworkError(f"edge {self.id!r} has a non-finite attribute")


@dataclass(frozen=True)
class Path:
    """An ordered sequence of edge ids."""

    edges: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        if not self.edges:
            raise NetworkError("a path needs at least one edge")

    def __iter__(self) -> Iterator[str]:
        return iter(self.edges)

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def label(self) -> str:
        return ">".join(self.edges)

    def __str__(self) -> str:
        return self.label


class EnumeratedPaths(NamedTuple):
    paths: list[Path]
    overflow: bool


@dataclass(frozen=True)
class DestinationPlan:
    """Index-space view of a network pruned to one destination.

    Edges leaving the destination are dropped (it absorbs all flow) and so
    are nodes that cannot reach it. ``out_ptr``/``out_edges`` form a CSR
    adjacency over active edges in file order. ``order`` lists the active
    nodes in topological order, or is None when the active subgraph has a
    directed cycle.
    """

    dest: int
    node_active: np.ndarray
    edge_active: np.ndarray
    out_degree: np.ndarray
    out_ptr: np.ndarray
    out_edges: np.ndarray
    order: np.ndarray | None
    n_pruned: int

    @property
    def acyclic(self) -> bool:
        return self.order is not None

    @cached_property
    def backward_order(self) -> np.ndarray:
        """Active non-destination nodes, heads before tails."""
        if self.order is None:
            raise NetworkError("network has a directed cycle")
        rev = self.order[::-1]
        return np.ascontiguousarray(rev[rev != self.dest])

    @cached_property
    def log_degree(self) -> np.ndarray:
        out = np.zeros(len(self.out_degree))
        mask = self.out_degree > 0
        out[mask] = np.log(self.out_degree[mask])
        return out


@dataclass(frozen=True)
class Network:
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    attr_names: tuple[str, ...] = ()
    origin: str | None = None
    destinations: tuple[str, ...] = ()
    _plans: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "attr_names", tuple(self.attr_names))
        object.__setattr__(self, "destinations", tuple(self.destinations))
        if len(set(self.nodes)) != len(self.nodes):
            raise NetworkError("duplicate node id")
        known = set(self.nodes)
        seen: set[str] = set()
        k = len(self.attr_names)
        for e in self.edges:
            if e.id in seen:
                raise NetworkError(f"duplicate edge id {e.id!r}")
            seen.add(e.id)
            for end in (e.tail, e.head):
                if end not in known:
                    raise NetworkError(f"edge {e.id!r} references unknown node {end!r}")
            if len(e.attrs) != k:
                raise NetworkError(
                    f"edge {e.id!r} has {len(e.attrs)} attributes, expected {k}"
                )
        for n in (self.origin, *self.destinations):
            if n is not None and n not in known:
                raise NetworkError(f"unknown node {n!r}")

    # index-space helpers -------------------------------------------------

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    @cached_property
    def edge_index(self) -> dict[str, int]:
        return {e.id: k for k, e in enumerate(self.edges)}

    @cached_property
    def tail_index(self) -> np.ndarray:
        idx = self.node_index
        return np.array([idx[e.tail] for e in self.edges], dtype=np.int64)

    @cached_property
    def head_index(self) -> np.ndarray:
        idx = self.node_index
        return np.array([idx[e.head] for e in self.edges], dtype=np.int64)

    @cached_property
    def attr_matrix(self) -> np.ndarray:
        """Edge attributes as an ``(n_edges, n_attrs)`` array."""
        return np.array([e.attrs for e in self.edges], dtype=float).reshape(
            len(self.edges), len(self.attr_names)
        )

    @cached_property
    def _out(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n: [] for n in self.nodes}
        for e in self.edges:
            out[e.tail].append(e.id)
        return out

    @cached_property
    def _in(self) -> dict[str, list[str]]:
        inc: dict[str, list[str]] = {n: [] for n in self.nodes}
        for e in self.edges:
            inc[e.head].append(e.id)
        return inc

    def edge(self, edge_id: str) -> Edge:
        try:
            return self.edges[self.edge_index[edge_id]]
        except KeyError:
            raise NetworkError(f"unknown edge {edge_id!r}") from None

    def out_edges(self, node: str) -> list[str]:
        if node not in self._out:
            raise NetworkError(f"unknown node {node!r}")
        return list(self._out[node])

    def in_edges(self, node: str) -> list[str]:
        if node not in self._in:
            raise NetworkError(f"unknown node {node!r}")
        return list(self._in[node])

    def resolve_dest(self, dest: str | None) -> str:
        if dest is None:
            if len(self.destinations) != 1:
                raise NetworkError("destination must be given explicitly")
            dest = self.destinations[0]
        if dest not in self.node_index:
            raise NetworkError(f"unknown node {dest!r}")
        return dest

    def resolve_origin(self, origin: str | None) -> str:
        origin = self.origin if origin is None else origin
        if origin is None:
            raise NetworkError("origin must be given explicitly")
        if origin not in self.node_index:
            raise NetworkError(f"unknown node {origin!r}")
        return origin

    def plan(self, dest: str) -> DestinationPlan:
        """Cached pruning/ordering data for ``dest``."""
        plan = self._plans.get(dest)
        if plan is None:
            plan = _build_plan(self, dest)
            self._plans[dest] = plan
        return plan

    # derived networks ----------------------------------------------------

    def without_edges(self, edge_ids: Iterable[str]) -> Network:
        drop = set(edge_ids)
        for eid in drop:
            self.edge(eid)
        return Network(
            self.nodes,
            tuple(e for e in self.edges if e.id not in drop),
            self.attr_names,
            self.origin,
            self.destinations,
        )

    def with_edges(self, new_edges: Iterable[Edge]) -> Network:
        new_edges = tuple(new_edges)
        nodes = list(self.nodes)
        for e in new_edges:
            for end in (e.tail, e.head):
                if end not in nodes:
                    nodes.append(end)
        return Network(
            tuple(nodes), self.edges + new_edges, self.attr_names, self.origin, self.destinations
        )

    def with_attrs(self, attr_names: Sequence[str], matrix: np.ndarray) -> Network:
        """Copy of the network with a replaced edge-attribute table."""
        matrix = np.asarray(matrix, dtype=float).reshape(len(self.edges), len(attr_names))
        edges = tuple(
            Edge(e.id, e.tail, e.head, tuple(row)) for e, row in zip(self.edges, matrix)
        )
        return Network(self.nodes, edges, tuple(attr_names), self.origin, self.destinations)


def _build_plan(net: Network, dest: str) -> DestinationPlan:
    n, m = len(net.nodes), len(net.edges)
    d = net.node_index[dest]
    tail, head = net.tail_index, net.head_index

    reach = np.zeros(n, dtype=bool)
    reach[d] = True
    incoming: list[list[int]] = [[] for _ in range(n)]
    for k in range(m):
        if tail[k] != d:
            incoming[head[k]].append(k)
    queue = deque([d])
    while queue:
        j = queue.popleft()
        for k in incoming[j]:
            i = tail[k]
            if not reach[i]:
                reach[i] = True
                queue.append(i)

    edge_active = reach[tail] & reach[head] & (tail != d) if m else np.zeros(0, dtype=bool)
    out_degree = np.bincount(tail[edge_active], minlength=n).astype(np.int64)
    out_ptr = np.zeros(n + 1, dtype=np.int64)
    out_ptr[1:] = np.cumsum(out_degree)
    active_ids = np.flatnonzero(edge_active)
    # stable sort keeps file order inside each tail's block
    out_edges = active_ids[np.argsort(tail[active_ids], kind="stable")].astype(np.int64)

    indeg = np.bincount(head[edge_active], minlength=n)
    order: list[int] = []
    queue = deque(i for i in range(n) if reach[i] and indeg[i] == 0)
    while queue:
        i = queue.popleft()
        order.append(i)
        for k in out_edges[out_ptr[i] : out_ptr[i + 1]]:
            j = head[k]
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(j)
    n_active = int(reach.sum())
    order_arr = np.array(order, dtype=np.int64) if len(order) == n_active else None

    n_pruned = n - n_active
    if n_pruned:
        logger.warning("pruned %d node(s) that cannot reach %s", n_pruned, dest)
    return DestinationPlan(
        dest=d,
        node_active=reach,
        edge_active=edge_active,
        out_degree=out_degree,
        out_ptr=out_ptr,
        out_edges=out_edges,
        order=order_arr,
        n_pruned=n_pruned,
    )


# parsing -------------------------------------------------------------------


def parse_network(text: str) -> Network:
    """Parse the line-based network format."""
    attr_names: tuple[str, ...] | None = None
    declared: list[str] = []
    implicit: list[str] = []
    edges: list[Edge] = []
    origin = None
    dests: list[str] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key = tok[0].upper()
        where = f"line {lineno}"
        if key == "ATTRS":
            if attr_names is not None:
                raise NetworkError(f"{where}: duplicate ATTRS line")
            if edges:
                raise NetworkError(f"{where}: ATTRS must precede EDGE lines")
            attr_names = tuple(tok[1:])
        elif key == "NODE":
            if len(tok) < 2:
                raise NetworkError(f"{where}: NODE needs an id")
            declared.extend(t for t in tok[1:] if t not in declared)
        elif key == "EDGE":
            if len(tok) < 4:
                raise NetworkError(f"{where}: EDGE needs id, tail and head")
            names = attr_names or ()
            values = tok[4:]
            if len(values) != len(names):
                raise NetworkError(
                    f"{where}: edge {tok[1]!r} has {len(values)} attributes, "
                    f"expected {len(names)}"
                )
            try:
                attrs = tuple(float(v) for v in values)
            except ValueError:
                raise NetworkError(f"{where}: non-numeric attribute in edge {tok[1]!r}") from None
            edges.append(Edge(tok[1], tok[2], tok[3], attrs))
            for end in (tok[2], tok[3]):
                if end not in implicit:
                    implicit.append(end)
        elif key == "ORIGIN":
            if len(tok) != 2:
                raise NetworkError(f"{where}: ORIGIN takes one node")
            origin = tok[1]
        elif key == "DEST":
            if len(tok) != 2:
                raise NetworkError(f"{where}: DEST takes one node")
            if tok[1] not in dests:
                dests.append(tok[1])
        else:
            raise NetworkError(f"{where}: unknown record {tok[0]!r}")

    if not edges:
        raise NetworkError("no edges")
    if declared:
        missing = [n for n in implicit if n not in declared]
        if missing:
            raise NetworkError(f"unknown node {missing[0]!r} in EDGE line")
        nodes = declared
    else:
        nodes = implicit
    return Network(tuple(nodes), tuple(edges), attr_names or (), origin, tuple(dests))


def load_network(path: str | FsPath) -> Network:
    return parse_network(FsPath(path).read_text(encoding="utf-8"))


def format_network(net: Network) -> str:
    lines = []
    if net.attr_names:
        lines.append("ATTRS " + " ".join(net.attr_names))
    used = {n for e in net.edges for n in (e.tail, e.head)}
    for n in net.nodes:
        if n not in used:
            lines.append(f"NODE {n}")
    for e in net.edges:
        vals = " ".join(repr(v) for v in e.attrs)
        lines.append(f"EDGE {e.id} {e.tail} {e.head} {vals}".rstrip())
    if net.origin is not None:
        lines.append(f"ORIGIN {net.origin}")
    for d in net.destinations:
        lines.append(f"DEST {d}")
    return "\n".join(lines) + "\n"


# topology ------------------------------------------------------------------


def out_edges(net: Network, node: str) -> list[str]:
    return net.out_edges(node)


def in_edges(net: Network, node: str) -> list[str]:
    return net.in_edges(node)


def prune_to_destination(net: Network, dest: str) -> Network:
    """Subnetwork of nodes and edges from which ``dest`` can be reached.

    Raises NetworkError when the network's origin is cut off from ``dest``.
    """
    dest = net.resolve_dest(dest)
    plan = net.plan(dest)
    if net.origin is not None and not plan.node_active[net.node_index[net.origin]]:
        raise NetworkError(f"origin {net.origin!r} cannot reach {dest!r}")
    nodes = tuple(n for i, n in enumerate(net.nodes) if plan.node_active[i])
    edges = tuple(e for k, e in enumerate(net.edges) if plan.edge_active[k])
    return Network(nodes, edges, net.attr_names, net.origin, (dest,))


def topological_order(net: Network) -> list[str] | None:
    """Kahn ordering of all nodes (declaration order breaks ties).

    Returns None when the network has a directed cycle.
    """
    idx = net.node_index
    indeg = {n: 0 for n in net.nodes}
    for e in net.edges:
        indeg[e.head] += 1
    queue = deque(n for n in net.nodes if indeg[n] == 0)
    order = []
    while queue:
        n = queue.popleft()
        order.append(n)
        for eid in net._out[n]:
            h = net.edges[net.edge_index[eid]].head
            indeg[h] -= 1
            if indeg[h] == 0:
                queue.append(h)
    if len(order) != len(idx):
        return None
    return order


def check_path(net: Network, path: Path | Sequence[str]) -> Path:
    """Validate edge chaining and return the path as a :class:`Path`."""
    path = path if isinstance(path, Path) else Path(tuple(path))
    prev = None
    for eid in path:
        e = net.edge(eid)
        if prev is not None and prev.head != e.tail:
            raise NetworkError(f"edges {prev.id!r} and {e.id!r} do not chain")
        prev = e
    return path


def path_nodes(net: Network, path: Path) -> list[str]:
    """Nodes visited by ``path``, origin first."""
    nodes = [net.edge(path.edges[0]).tail]
    nodes.extend(net.edge(eid).head for eid in path)
    return nodes


def enumerate_paths(
    net: Network,
    origin: str | None = None,
    dest: str | None = None,
    max_paths: int = 100_000,
    max_depth: int | None = None,
) -> EnumeratedPaths:
    """All simple origin-to-destination paths, depth first in edge file order.

    Cyclic networks require ``max_depth`` (maximum number of edges).
    """
    origin = net.resolve_origin(origin)
    dest = net.resolve_dest(dest)
    plan = net.plan(dest)
    if not plan.acyclic and max_depth is None:
        raise NetworkError("cyclic network: enumerate_paths needs max_depth")
    o = net.node_index[origin]
    if not plan.node_active[o]:
        raise NetworkError(f"origin {origin!r} cannot reach {dest!r}")

    head = net.head_index
    ptr, adj = plan.out_ptr, plan.out_edges
    limit = max_depth if max_depth is not None else len(net.nodes)
    paths: list[Path] = []
    overflow = False
    stack: list[int] = []
    on_path = {o}

    def dfs(i: int) -> bool:
        nonlocal overflow
        for k in adj[ptr[i] : ptr[i + 1]]:
            j = int(head[k])
            if j in on_path:
                continue
            stack.append(int(k))
            if j == plan.dest:
                if len(paths) >= max_paths:
                    overflow = True
                    stack.pop()
                    return False
                paths.append(Path(tuple(net.edges[e].id for e in stack)))
            elif len(stack) < limit:
                on_path.add(j)
                keep_going = dfs(j)
                on_path.discard(j)
                if not keep_going:
                    stack.pop()
                    return False
            stack.pop()
        return True

    if o == plan.dest:
        raise NetworkError("origin equals destination")
    dfs(o)
    return EnumeratedPaths(paths, overflow)
