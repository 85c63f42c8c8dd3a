"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--size 60] [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from rlca import _kernels_py
from rlca.solver import Parameters, node_penalty, utilities
from rlca.synthetic import grid_network

try:
    from rlca import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def inputs(size: int):
    net = grid_network(size, size)
    dest = net.destinations[0]
    plan = net.plan(dest)
    params = Parameters((-1.0, -0.5, -0.2), kappa=0.5)
    u = np.ascontiguousarray(utilities(net, params))
    pen = np.ascontiguousarray(node_penalty(net, params, dest))
    values = (u, pen, plan.backward_order, plan.out_ptr, plan.out_edges, net.head_index, plan.dest)
    V, phi = _kernels_py.values_backward(*values)
    prob = np.where(plan.edge_active, np.exp(V - phi[net.tail_index]), 0.0)
    x0 = np.zeros(len(net.nodes))
    x0[0] = 1.0
    flows = (prob, x0, plan.order, plan.out_ptr, plan.out_edges, net.head_index)
    return net, values, flows


def best(fn, args, repeat: int) -> float:
    n, _ = timeit.Timer(lambda: fn(*args)).autorange()
    return min(timeit.repeat(lambda: fn(*args), number=n, repeat=repeat)) / n


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=60, help="grid side length")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    net, values, flows = inputs(args.size)
    print(f"grid {args.size}x{args.size}: {len(net.nodes)} nodes, {len(net.edges)} edges")
    if compiled is None:
        print("compiled extension not available; build with pip install -e . --no-build-isolation")
        return
    print(f"{'kernel':<16}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for name, kargs in (("values_backward", values), ("flows_forward", flows)):
        py = best(getattr(_kernels_py, name), kargs, args.repeat)
        cy = best(getattr(compiled, name), kargs, args.repeat)
        print(f"{name:<16}{py * 1e3:>14.3f}{cy * 1e3:>14.3f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
