from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import NESTED_BASE, cost_params, random_dag
from rlca.network import Edge, NetworkError, Path, enumerate_paths, parse_network
from rlca.paths import (
    evaluate_path,
    path_probabilities,
    path_probability_recursive,
    paths_through,
    prefix_logsum,
    probability_ratio,
    through_node_logsum,
)
from rlca.solver import solve_values

LOG2, LOG3 = math.log(2.0), math.log(3.0)


def probs_list(net, params, method="recursive"):
    out = path_probabilities(net, params, enumerate_paths(net).paths, method=method)
    return list(out.values())


def test_evaluate_bridge(bridge):
    r1 = evaluate_path(bridge, cost_params(1.0), ["a1", "a3"])
    assert r1.u_r == pytest.approx(-2.0)
    assert r1.gamma_r == pytest.approx(LOG2)
    assert r1.U_r == pytest.approx(-2.0 - LOG2)
    r3 = evaluate_path(bridge, cost_params(5.0), ["a2"])
    assert r3.gamma_r == 0.0 and r3.U_r == pytest.approx(-2.0)


def test_evaluate_nested_rho(nested):
    ev = evaluate_path(nested, cost_params(1.0), ["a", "a1"])
    assert ev.rho_r == pytest.approx(LOG3)


def test_evaluate_rejects_broken_path(bridge):
    with pytest.raises(NetworkError):
        evaluate_path(bridge, cost_params(), ["a2", "a3"])


def test_bridge_probabilities(bridge):
    np.testing.assert_allclose(probs_list(bridge, cost_params(0.0)), [1 / 3] * 3, atol=1e-12)
    np.testing.assert_allclose(probs_list(bridge, cost_params(1.0)), [0.25, 0.25, 0.5], atol=1e-12)


def test_recursive_product_example(bridge):
    probs = solve_values(bridge, cost_params()).probability_array()
    assert path_probability_recursive(bridge, ["a1", "a3"], probs) == pytest.approx(1 / 3)
    single = parse_network("ATTRS cost\nEDGE a s u 1\nEDGE b u t 2\nDEST t\n")
    p = solve_values(single, cost_params(3.0)).probability_array()
    assert path_probability_recursive(single, ["a", "b"], p) == 1.0


def test_nested_table_baselines(nested):
    np.testing.assert_allclose(probs_list(nested, cost_params(1.0)), NESTED_BASE["k1"], atol=5e-5)
    kc2 = cost_params(1.0, C=2.0)
    np.testing.assert_allclose(probs_list(nested, kc2), NESTED_BASE["kc2"], atol=5e-5)


def test_probability_ratio_bridge(bridge):
    for kappa in (0.0, 0.5, 1.7):
        p = cost_params(kappa)
        assert probability_ratio(bridge, p, ["a1", "a3"], ["a2"]) == pytest.approx(
            math.exp(-kappa * LOG2)
        )
        assert probability_ratio(bridge, p, ["a2"], ["a2"]) == 1.0
    extra = bridge.with_edges([Edge("a5", "i1", "t", (0.1,))])
    p = cost_params(1.3)
    assert probability_ratio(extra, p, ["a1", "a3"], ["a2"]) == pytest.approx(
        math.exp(-1.3 * LOG3)
    )


def test_complex_shape(complex_net):
    paths = enumerate_paths(complex_net).paths
    prev_r4 = 0.0
    for kappa in np.linspace(0.1, 10.0, 25):
        P = list(path_probabilities(complex_net, cost_params(kappa), paths).values())
        assert P[2] > P[0]
        assert P[0] == pytest.approx(P[1], abs=1e-14)
        assert P[3] > prev_r4
        prev_r4 = P[3]
    assert prev_r4 > 0.999


def test_bridge_sweep_monotone(bridge):
    last = None
    for kappa in np.linspace(0.0, 2.5, 26):
        P = probs_list(bridge, cost_params(kappa))
        if last is not None:
            assert P[2] > last[2] and P[0] < last[0]
        last = P
        if kappa <= 1.0:
            assert P[0] >= 0.25 - 1e-12 and P[2] <= 0.5 + 1e-12


def test_empty_path_set(bridge):
    with pytest.raises(ValueError):
        path_probabilities(bridge, cost_params(), [])
    with pytest.raises(ValueError):
        path_probabilities(bridge, cost_params(), None, method="bogus")


def test_paths_through(nested):
    paths = enumerate_paths(nested).paths
    assert len(paths_through(nested, paths, "B")) == 3
    assert paths_through(nested, paths, "A") == []


def _logsum_gap(net, params, node):
    paths = enumerate_paths(net).paths
    vals = solve_values(net, params)
    left = through_node_logsum(net, params, node, paths)
    right = prefix_logsum(net, params, node, paths) + vals.adjusted_logsum[node]
    return left, right


@pytest.mark.parametrize("node,kappa", [("B", 1.0), ("C", 0.3), ("B", 2.5)])
def test_through_node_logsum_nested(nested, node, kappa):
    left, right = _logsum_gap(nested, cost_params(kappa, C=2.0), node)
    assert left == pytest.approx(right, rel=1e-10, abs=1e-12)


# properties ------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.0, 3.0))
def test_decomposition_identity(seed, kappa):
    net = random_dag(np.random.default_rng(seed))
    params = cost_params(kappa)
    paths = enumerate_paths(net).paths
    rec = path_probabilities(net, params, paths, "recursive")
    closed = path_probabilities(net, params, paths, "closed_form")
    for p in paths:
        assert rec[p] == pytest.approx(closed[p], abs=1e-12)
    assert sum(rec.values()) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.0, 3.0), st.data())
def test_through_node_logsum_identity(seed, kappa, data):
    net = random_dag(np.random.default_rng(seed))
    params = cost_params(kappa)
    paths = enumerate_paths(net).paths
    interior = sorted({n for p in paths for n in [net.edge(e).head for e in p.edges[:-1]]})
    if not interior:
        return
    node = data.draw(st.sampled_from(interior))
    left, right = _logsum_gap(net, params, node)
    assert left == pytest.approx(right, rel=1e-10, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.0, 3.0))
def test_iia_within_same_node_sequence(seed, kappa):
    net = random_dag(np.random.default_rng(seed))
    params = cost_params(kappa)
    paths = enumerate_paths(net).paths
    by_nodes: dict[tuple, list[Path]] = {}
    for p in paths:
        key = tuple(net.edge(e).head for e in p.edges)
        by_nodes.setdefault(key, []).append(p)
    for group in by_nodes.values():
        for r, r2 in zip(group, group[1:]):
            du = evaluate_path(net, params, r).u_r - evaluate_path(net, params, r2).u_r
            assert probability_ratio(net, params, r, r2) == pytest.approx(math.exp(du), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.0, 3.0))
def test_homogeneous_rho_is_kappa_gamma(seed, kappa):
    net = random_dag(np.random.default_rng(seed))
    for p in enumerate_paths(net).paths:
        ev = evaluate_path(net, cost_params(kappa), p)
        assert ev.rho_r == pytest.approx(kappa * ev.gamma_r, abs=1e-12)
