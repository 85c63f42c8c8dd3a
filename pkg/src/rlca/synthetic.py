"""Seeded synthetic networks and trip corpora for estimation experiments."""

from __future__ import annotations

import numpy as np

from rlca.estimation import (
    ModelSpec,
    Observation,
    link_size_attribute,
    simulate_from_spec,
    standard_specs,
)
from rlca.network import Edge, Network
from rlca.solver import Parameters

ATTRS = ("length", "signal", "const")

# coefficients used to generate data; the order follows ModelSpec.coef_names
TRUE_RL = (-2.0, -0.6, -0.4)
TRUE_EXTRA = {"kappa_CA": -0.5, "beta_LS": -1.0, "kappa_CAxLS": 0.4}


def grid_network(rows: int = 8, cols: int = 8, diag_prob: float = 0.5, seed: int = 0) -> Network:
    """Acyclic grid with east and south edges plus random south-east diagonals.

    Edge attributes: ``length`` (jittered unit or diagonal length), ``signal``
    (0/1 with probability 0.3) and a constant 1. Destinations are the
    south-east corner and the east end of the middle row.
    """
    rng = np.random.default_rng(seed)
    name = lambda r, c: f"n{r}_{c}"  # noqa: E731
    nodes = tuple(name(r, c) for r in range(rows) for c in range(cols))
    edges = []
    for r in range(rows):
        for c in range(cols):
            steps = []
            if c + 1 < cols:
                steps.append((r, c + 1, 1.0))
            if r + 1 < rows:
                steps.append((r + 1, c, 1.0))
            if r + 1 < rows and c + 1 < cols and rng.random() < diag_prob:
                steps.append((r + 1, c + 1, np.sqrt(2.0)))
            for r2, c2, base in steps:
                length = base * rng.uniform(0.8, 1.2)
                signal = float(rng.random() < 0.3)
                eid = f"e{len(edges)}"
                edges.append(Edge(eid, name(r, c), name(r2, c2), (round(length, 4), signal, 1.0)))
    dests = (name(rows - 1, cols - 1), name(rows // 2, cols - 1))
    return Network(nodes, tuple(edges), ATTRS, name(0, 0), dests)


def default_od(net: Network, n_origins: int = 6) -> dict[tuple[str, str], float]:
    """Origins in the north-west block, each paired with every destination it reaches."""
    side = int(np.ceil(np.sqrt(n_origins)))
    origins = [f"n{r}_{c}" for r in range(side) for c in range(side)][:n_origins]
    od = {}
    for o in origins:
        for d in net.destinations:
            if net.plan(d).node_active[net.node_index[o]] and o != d:
                od[(o, d)] = 1.0
    total = sum(od.values())
    return {k: v / total for k, v in od.items()}


def true_theta(spec: ModelSpec) -> np.ndarray:
    extra = [TRUE_EXTRA[n] for n in spec.coef_names[len(spec.attrs) :]]
    return np.array(list(TRUE_RL[: len(spec.attrs)]) + extra)


def baseline_link_size(net: Network, od) -> np.ndarray:
    """Link size under the true plain-RL coefficients; fixed across replications."""
    return link_size_attribute(net, Parameters(TRUE_RL), od)


def synthetic_sample(
    spec: ModelSpec, n: int, seed: int, net: Network | None = None
) -> tuple[Network, list[Observation], np.ndarray]:
    """Trips generated from ``spec`` at its true coefficients."""
    net = net or grid_network()
    od = default_od(net)
    ls = baseline_link_size(net, od)
    obs = simulate_from_spec(spec, net, true_theta(spec), od, n, seed, ls=ls)
    return net, obs, ls


def synthetic_corpus(n: int = 1832, seed: int = 2024) -> tuple[Network, list[Observation]]:
    """Multi-destination corpus drawn from the RL-CA specification."""
    net = grid_network()
    spec = standard_specs(ATTRS)["RL-CA"]
    _, obs, _ = synthetic_sample(spec, n, seed, net)
    return net, obs
