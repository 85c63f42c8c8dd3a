"""Shared builders for tests."""

from __future__ import annotations

import numpy as np

from rlca.network import Edge, Network
from rlca.solver import Parameters


def cost_params(kappa: float = 0.0, **nodes: float) -> Parameters:
    return Parameters((-1.0,), kappa=kappa, kappa_nodes=nodes)


def random_dag(rng: np.random.Generator, n_nodes: int = 7, density: float = 0.45) -> Network:
    """Random DAG on 0..n-1 with edges from lower to higher index.

    Every node gets an edge towards the sink so that all nodes reach it; some
    pairs get parallel edges.
    """
    names = [f"v{i}" for i in range(n_nodes)]
    edges = []
    for i in range(n_nodes - 1):
        heads = [j for j in range(i + 1, n_nodes) if rng.random() < density]
        if not heads:
            heads = [int(rng.integers(i + 1, n_nodes))]
        if rng.random() < 0.2:
            heads.append(heads[0])
        for j in heads:
            cost = float(np.round(rng.uniform(0.1, 2.0), 3))
            edges.append(Edge(f"e{len(edges)}", names[i], names[j], (cost,)))
    return Network(tuple(names), tuple(edges), ("cost",), names[0], (names[-1],))


# nested fixture, six paths in enumeration order; None marks the removed path
NESTED_BASE = {
    "k1": (0.4485, 0.1650, 0.0607, 0.0607, 0.1001, 0.1650),
    "kc2": (0.5730, 0.2108, 0.0775, 0.0258, 0.0426, 0.0703),
}
NESTED_REMOVAL = {
    "k1": {
        "a1": (None, 0.3726, 0.1371, 0.0914, 0.1506, 0.2484),
        "a2": (0.6174, None, 0.0836, 0.0557, 0.0918, 0.1514),
        "b1": (0.4185, 0.1539, 0.0566, None, 0.1401, 0.2309),
        "b2": (0.4429, 0.1629, 0.0599, 0.0899, None, 0.2444),
    },
    "kc2": {
        "a1": (None, 0.5535, 0.2036, 0.0453, 0.0746, 0.1230),
        "a2": (0.7712, None, 0.1044, 0.0232, 0.0382, 0.0630),
        "b1": (0.5138, 0.1890, 0.0695, None, 0.0860, 0.1417),
        "b2": (0.5317, 0.1956, 0.0720, 0.0540, None, 0.1467),
    },
}
NESTED_THRESHOLDS = {"a1": 2.699, "a2": 0.692, "b1": 0.508, "b2": 0.905}


def nested_params(case: str) -> Parameters:
    return cost_params(1.0) if case == "k1" else cost_params(1.0, C=2.0)
