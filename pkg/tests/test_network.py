from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_dag
from rlca.fixtures import fixture_text, load_fixture
from rlca.network import (
    Edge,
    Network,
    NetworkError,
    Path,
    check_path,
    enumerate_paths,
    format_network,
    in_edges,
    out_edges,
    parse_network,
    prune_to_destination,
    topological_order,
)

BRIDGE_TEXT = """\
ATTRS cost
EDGE a1 s i1 1.9
EDGE a2 s t 2.0
EDGE a3 i1 t 0.1
EDGE a4 i1 t 0.1
"""


def test_parse_bridge():
    net = parse_network(BRIDGE_TEXT)
    assert len(net.nodes) == 3
    assert [e.id for e in net.edges] == ["a1", "a2", "a3", "a4"]
    assert net.edge("a1").attrs == (1.9,)


def test_parse_empty_is_error():
    with pytest.raises(NetworkError, match="no edges"):
        parse_network("ATTRS cost\n# nothing here\n")


def test_parse_undeclared_node_named():
    text = "ATTRS c\nNODE s t\nEDGE a s ghost 1\n"
    with pytest.raises(NetworkError, match="ghost"):
        parse_network(text)


def test_parse_duplicate_edge():
    with pytest.raises(NetworkError, match="duplicate edge id 'a'"):
        parse_network("ATTRS c\nEDGE a s t 1\nEDGE a s t 2\n")


def test_parse_arity_mismatch():
    with pytest.raises(NetworkError, match="2 attributes"):
        parse_network("ATTRS c\nEDGE a s t 1 2\n")


def test_parse_isolated_node_and_defaults():
    net = parse_network("ATTRS c\nNODE s t z\nEDGE a s t 1\nORIGIN s\nDEST t\n")
    assert net.nodes == ("s", "t", "z")
    assert net.origin == "s" and net.destinations == ("t",)


def test_format_roundtrip():
    for name in ("bridge", "complex", "nested"):
        net = load_fixture(name)
        again = parse_network(format_network(net))
        assert again == net
    assert "ORIGIN s" in fixture_text("bridge")


def test_out_edges_bridge(bridge):
    assert out_edges(bridge, "s") == ["a1", "a2"]
    assert out_edges(bridge, "i1") == ["a3", "a4"]
    assert out_edges(bridge, "t") == []
    with pytest.raises(NetworkError):
        out_edges(bridge, "nowhere")


def test_prune_identity(bridge):
    pruned = prune_to_destination(bridge, "t")
    assert pruned.nodes == bridge.nodes and pruned.edges == bridge.edges


def test_prune_drops_isolated(bridge):
    net = Network(bridge.nodes + ("z",), bridge.edges, bridge.attr_names, "s", ("t",))
    assert "z" not in prune_to_destination(net, "t").nodes


def test_prune_dead_end_branch():
    net = parse_network("ATTRS c\nEDGE a s t 1\nEDGE b s x 1\nEDGE c x y 1\nORIGIN s\n")
    pruned = prune_to_destination(net, "t")
    assert [e.id for e in pruned.edges] == ["a"]
    assert net.plan("t").n_pruned == 2


def test_prune_origin_cut_off():
    net = parse_network("ATTRS c\nEDGE a s x 1\nEDGE b y t 1\nORIGIN s\n")
    with pytest.raises(NetworkError, match="cannot reach"):
        prune_to_destination(net, "t")


def test_topological_order(bridge, complex_net):
    assert topological_order(bridge) == ["s", "i1", "t"]
    assert topological_order(complex_net)[-1] == "5"
    cyc = parse_network("ATTRS c\nEDGE a u v 1\nEDGE b v u 1\n")
    assert topological_order(cyc) is None


def test_enumerate_fixtures(bridge, complex_net, nested):
    paths = enumerate_paths(bridge).paths
    assert [p.edges for p in paths] == [("a1", "a3"), ("a1", "a4"), ("a2",)]
    labels = [p.label for p in enumerate_paths(complex_net).paths]
    assert labels == ["12>23>35", "12>23>34>45", "12>24>45", "15"]
    assert len(enumerate_paths(nested).paths) == 6


def test_enumerate_overflow(nested):
    res = enumerate_paths(nested, max_paths=4)
    assert len(res.paths) == 4 and res.overflow


def test_enumerate_cyclic_needs_depth():
    net = parse_network("ATTRS c\nEDGE a s u 1\nEDGE b u v 1\nEDGE c v u 1\nEDGE d u t 1\n")
    with pytest.raises(NetworkError, match="max_depth"):
        enumerate_paths(net, "s", "t")
    paths = enumerate_paths(net, "s", "t", max_depth=5).paths
    assert [p.edges for p in paths] == [("a", "d")]


def test_path_chaining(bridge):
    check_path(bridge, ["a1", "a3"])
    with pytest.raises(NetworkError, match="do not chain"):
        check_path(bridge, ["a2", "a3"])
    with pytest.raises(ValueError):
        Path(())


def test_edge_attrs_finite():
    with pytest.raises(ValueError):
        Edge("a", "s", "t", (float("nan"),))


def _brute_force_paths(net: Network, origin: str, dest: str) -> set[tuple[str, ...]]:
    """All simple paths by trying every edge sequence up to the node count."""
    found = set()
    for length in range(1, len(net.nodes)):
        for seq in itertools.product([e.id for e in net.edges], repeat=length):
            edges = [net.edge(e) for e in seq]
            if edges[0].tail != origin or edges[-1].head != dest:
                continue
            if any(a.head != b.tail for a, b in zip(edges, edges[1:])):
                continue
            nodes = [edges[0].tail] + [e.head for e in edges]
            if len(set(nodes)) == len(nodes):
                found.add(seq)
    return found


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 5))
def test_enumerate_matches_brute_force(seed, n):
    net = random_dag(np.random.default_rng(seed), n_nodes=n, density=0.6)
    if len(net.edges) > 9:
        net = Network(net.nodes, net.edges[:9], net.attr_names, net.origin, net.destinations)
    dest = net.destinations[0]
    if not net.plan(dest).node_active[0]:
        return
    ours = [p.edges for p in enumerate_paths(net).paths]
    assert len(ours) == len(set(ours))
    assert set(ours) == _brute_force_paths(net, net.origin, dest)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_incidence_partition_and_topo(seed):
    net = random_dag(np.random.default_rng(seed), n_nodes=8)
    m = len(net.edges)
    assert sum(len(out_edges(net, n)) for n in net.nodes) == m
    assert sum(len(in_edges(net, n)) for n in net.nodes) == m
    order = topological_order(net)
    pos = {n: i for i, n in enumerate(order)}
    assert all(pos[e.tail] < pos[e.head] for e in net.edges)
    for p in enumerate_paths(net).paths:
        check_path(net, p)
