"""Pure-Python fallback for :mod:`rlca._kernels` (same signatures)."""

from __future__ import annotations

import numpy as np


def values_backward(u, penalty, order, out_ptr, out_edges, head, dest):
    V = np.full(len(u), -np.inf)
    phi = np.full(len(penalty), -np.inf)
    phi[dest] = 0.0
    for i in order:
        ks = out_edges[out_ptr[i] : out_ptr[i + 1]]
        if len(ks) == 0:
            continue
        js = head[ks]
        v = u[ks] + phi[js] - penalty[js]
        V[ks] = v
        vmax = v.max()
        phi[i] = vmax + np.log(np.exp(v - vmax).sum())
    return V, phi


def flows_forward(prob, x0, order, out_ptr, out_edges, head):
    x = np.array(x0, dtype=float, copy=True)
    f = np.zeros(len(prob))
    for i in order:
        xi = x[i]
        if xi == 0.0:
            continue
        for k in out_edges[out_ptr[i] : out_ptr[i + 1]]:
            fk = xi * prob[k]
            f[k] = fk
            x[head[k]] += fk
    return x, f
