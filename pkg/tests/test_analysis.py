from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (
    NESTED_REMOVAL,
    NESTED_THRESHOLDS,
    cost_params,
    nested_params,
    random_dag,
)
from rlca.analysis import (
    SCAN_HEADER,
    braess_delta,
    braess_delta_root,
    braess_kappa_threshold,
    braess_scan,
    edge_addition_test,
    grid,
    regularity_threshold,
    scan_csv,
    welfare,
    welfare_grad_kappa,
    welfare_grad_utility,
)
from rlca.fixtures import braess_network
from rlca.network import Edge, NetworkError, enumerate_paths, parse_network
from rlca.paths import evaluate_path
from rlca.solver import solve

LOG2, LOG3 = math.log(2.0), math.log(3.0)
NESTED_NODE = {"a1": "B", "a2": "B", "b1": "C", "b2": "C"}


def shift_cost(net, edge_id, h):
    costs = net.attr_matrix.copy()
    costs[net.edge_index[edge_id], 0] += h
    return net.with_attrs(net.attr_names, costs)


def fd_utility(net, params, edge_id, h=1e-6):
    # u_a = -cost_a, so raising u_a by h lowers the cost by h
    up = welfare(shift_cost(net, edge_id, -h), params)
    down = welfare(shift_cost(net, edge_id, h), params)
    return (up - down) / (2 * h)


def fd_kappa(net, params, node, h=1e-6):
    k = params.kappa_at(node)
    up = welfare(net, params.with_node_kappa(node, k + h))
    down = welfare(net, params.with_node_kappa(node, k - h))
    return (up - down) / (2 * h)


# welfare ---------------------------------------------------------------------


@pytest.mark.parametrize("u", [-1.0, 0.0, 0.7])
def test_parallel_welfare(u):
    net = braess_network(-u, -u, -u, -u)
    for kappa in (0.0, 1.0, 3.0):
        assert welfare(net, cost_params(kappa)) == pytest.approx(LOG2 + 2 * u, abs=1e-12)


@pytest.mark.parametrize("eps,kappa", [(0.0, 1.0), (0.4, 2.0), (-1.0, 0.3)])
def test_connector_welfare(eps, kappa):
    u = -0.5
    net = braess_network(-u, -u, -u, -u, -eps)
    expect = 2 * u + math.log(1 + math.exp(-kappa * LOG2) * (1 + math.exp(eps)))
    assert welfare(net, cost_params(kappa)) == pytest.approx(expect, abs=1e-12)


def test_single_path_welfare():
    net = parse_network("ATTRS cost\nEDGE a s u 1.5\nEDGE b u t 0.5\nORIGIN s\nDEST t\n")
    assert welfare(net, cost_params(2.0)) == pytest.approx(-2.0)


def test_welfare_equals_path_logsum(nested):
    params = cost_params(1.0, C=2.0)
    U = [evaluate_path(nested, params, p).U_r for p in enumerate_paths(nested).paths]
    assert welfare(nested, params) == pytest.approx(math.log(np.exp(U).sum()), abs=1e-12)


def test_grad_utility_bridge(bridge):
    g = welfare_grad_utility(bridge, cost_params())
    assert g["a2"] == pytest.approx(1 / 3, abs=1e-12)


def test_grad_utility_zero_flow():
    net = parse_network("ATTRS cost\nEDGE a s t 1\nEDGE b u t 1\nNODE s u t\nORIGIN s\nDEST t\n")
    assert welfare_grad_utility(net, cost_params())["b"] == 0.0


def test_grad_utility_fd_nested(nested):
    params = cost_params(1.0, C=2.0)
    g = welfare_grad_utility(nested, params)
    assert len(g) == 8
    for eid, val in g.items():
        assert val == pytest.approx(fd_utility(nested, params, eid), rel=1e-6, abs=1e-9)


def test_grad_kappa_nested(nested):
    g = welfare_grad_kappa(nested, cost_params(1.0), "B")
    assert g == pytest.approx(-0.6742 * LOG3, abs=1e-4)
    assert g == pytest.approx(fd_kappa(nested, cost_params(1.0), "B"), rel=1e-6)


def test_grad_kappa_single_choice(complex_net):
    assert welfare_grad_kappa(complex_net, cost_params(1.0), "4") == 0.0


def test_welfare_decreases_along_kappa_ray(nested):
    ws = [welfare(nested, cost_params(k, C=2 * k)) for k in np.linspace(0, 3, 13)]
    assert all(b < a for a, b in zip(ws, ws[1:]))


# regularity ------------------------------------------------------------------


@pytest.mark.parametrize("case", ["k1", "kc2"])
@pytest.mark.parametrize("edge", ["a1", "a2", "b1", "b2"])
def test_nested_removal_columns(nested, case, edge):
    rep = regularity_threshold(nested, nested_params(case), NESTED_NODE[edge], edge)
    after = [c.after for c in rep.paths]
    for got, want in zip(after, NESTED_REMOVAL[case][edge]):
        if want is None:
            assert math.isnan(got)
        else:
            assert got == pytest.approx(want, abs=5e-5)


def test_removing_a2_lowers_other_branch(nested):
    rep = regularity_threshold(nested, cost_params(1.0), "B", "a2")
    for change in rep.paths[3:]:
        assert round(change.pct_change) == -8
    assert rep.violated and rep.outside_change < 0


@pytest.mark.parametrize("edge", sorted(NESTED_THRESHOLDS))
def test_nested_thresholds(nested, edge):
    rep = regularity_threshold(nested, cost_params(1.0), NESTED_NODE[edge], edge)
    assert rep.threshold == pytest.approx(NESTED_THRESHOLDS[edge], abs=1e-3)
    assert rep.violated == (1.0 > rep.threshold)


def test_regularity_errors(nested, complex_net):
    with pytest.raises(NetworkError, match="does not leave"):
        regularity_threshold(nested, cost_params(1.0), "C", "a1")
    with pytest.raises(NetworkError, match="interior"):
        regularity_threshold(nested, cost_params(1.0), "A", "a")
    with pytest.raises(NetworkError, match="single outgoing"):
        regularity_threshold(complex_net, cost_params(1.0), "4", "45")


def _interior_removals(net):
    plan = net.plan(net.destinations[0])
    origin = net.origin
    _, flows = solve(net, cost_params())
    for i, node in enumerate(net.nodes):
        if node in (origin, net.destinations[0]) or plan.out_degree[i] < 2:
            continue
        if flows.node_visits[i] <= 1e-9:
            continue
        for eid in net.out_edges(node):
            yield node, eid


@pytest.mark.parametrize("fixture", ["nested", "complex_net"])
def test_threshold_sign_consistency_fixtures(fixture, request):
    net = request.getfixturevalue(fixture)
    for node, eid in _interior_removals(net):
        base = regularity_threshold(net, cost_params(1.0), node, eid)
        for k in (base.threshold - 0.05, base.threshold + 0.05):
            if k < 0:
                continue
            rep = regularity_threshold(net, cost_params(1.0).with_node_kappa(node, k), node, eid)
            assert rep.violated == (rep.outside_change < 0), (node, eid, k)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.0, 4.0))
def test_threshold_sign_consistency_random(seed, kappa):
    net = random_dag(np.random.default_rng(seed))
    for node, eid in _interior_removals(net):
        rep = regularity_threshold(net, cost_params(kappa), node, eid)
        if abs(rep.threshold - kappa) < 1e-6 or abs(rep.outside_change) < 1e-13:
            continue
        assert rep.violated == (rep.outside_change < 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_regularity_holds_without_aversion(seed):
    net = random_dag(np.random.default_rng(seed))
    for node, eid in _interior_removals(net):
        rep = regularity_threshold(net, cost_params(0.0), node, eid)
        assert not rep.violated
        for c in rep.paths:
            if not math.isnan(c.after):
                assert c.after >= c.before - 1e-12


# edge addition -----------------------------------------------------------------


def test_addition_matches_closed_form_threshold():
    eps = 0.3
    alpha = math.log1p(math.exp(eps)) / LOG2
    net = braess_network(0.5, 0.5, 0.5, 0.5)
    new = Edge("a5", "i1", "i2", (-eps,))
    for k in (alpha - 0.1, alpha + 0.1):
        rep = edge_addition_test(net, cost_params(0.0, i1=k), "i1", new)
        assert rep.improves == (k < alpha)
        assert rep.improves == (rep.delta > 0)


def test_addition_free_without_aversion(bridge):
    rep = edge_addition_test(bridge, cost_params(0.0), "i1", Edge("a5", "i1", "t", (5.0,)))
    assert rep.rhs == 0.0 and rep.improves and rep.delta > 0


def test_addition_eps_zero_kappa_two():
    net = braess_network(0.5, 0.5, 0.5, 0.5)
    rep = edge_addition_test(net, cost_params(2.0), "i1", Edge("a5", "i1", "i2", (0.0,)))
    assert rep.rhs == pytest.approx(1 - (1 / 2) ** 2)
    assert not rep.improves and rep.delta < 0


def test_addition_errors(bridge):
    with pytest.raises(NetworkError, match="must leave"):
        edge_addition_test(bridge, cost_params(), "i1", Edge("x", "s", "t", (1.0,)))
    with pytest.raises(NetworkError, match="cannot reach"):
        edge_addition_test(bridge, cost_params(), "i1", Edge("x", "i1", "nowhere", (1.0,)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.0, 3.0), st.floats(-2.0, 3.0), st.data())
def test_addition_flag_matches_welfare(seed, kappa, cost, data):
    net = random_dag(np.random.default_rng(seed))
    dest = net.destinations[0]
    tails = [n for n in net.nodes[1:-1] if net.out_edges(n)]
    if not tails:
        return
    node = data.draw(st.sampled_from(tails))
    rep = edge_addition_test(net, cost_params(kappa), node, Edge("new", node, dest, (cost,)))
    if abs(rep.delta) > 1e-10:
        assert rep.improves == (rep.delta > 0)


# Braess family ---------------------------------------------------------------


@pytest.mark.parametrize("x", [0.0, 0.5, 1.0, 2.0, 3.0])
def test_braess_root_matches_closed_form(x):
    assert braess_delta_root(x) == pytest.approx(braess_kappa_threshold(x), abs=1e-9)


def test_braess_known_points():
    assert braess_kappa_threshold(0.0) == pytest.approx(1.8946, abs=1e-3)
    assert braess_kappa_threshold(1.0) == pytest.approx(1.0, abs=1e-12)


def test_braess_no_aversion_never_loses():
    for row in braess_scan(grid(0.0, 3.0, 0.25), over="x", kappa=0.0):
        assert row.delta >= 0


def test_braess_scan_sign_change():
    rows = braess_scan([1.8, 2.0], over="kappa", x=0.0)
    assert rows[0].delta > 0 > rows[1].delta
    assert braess_delta(1.0, 1.0).delta == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        braess_scan([1.0], over="y")


def test_scan_csv_format():
    text = scan_csv(braess_scan([0.0, 0.5], over="x", kappa=1.0))
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(SCAN_HEADER)
    assert len(lines) == 3
    assert len(grid(0.0, 3.0, 0.5)) == 7
