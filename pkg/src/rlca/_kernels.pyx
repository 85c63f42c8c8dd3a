# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the value recursion and flow propagation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def values_backward(const double[::1] u, const double[::1] penalty,
                    const cnp.int64_t[::1] order, const cnp.int64_t[::1] out_ptr,
                    const cnp.int64_t[::1] out_edges, const cnp.int64_t[::1] head, cnp.int64_t dest):
    """Backward logsum recursion over ``order`` (heads before tails).

    Returns ``(V, phi)`` where ``phi`` is the unpenalized logsum per node.
    Inactive edges keep ``V = -inf``.
    """
    cdef Py_ssize_t m = u.shape[0]
    cdef Py_ssize_t n = penalty.shape[0]
    V_arr = np.full(m, -np.inf)
    phi_arr = np.full(n, -np.inf)
    cdef double[::1] V = V_arr
    cdef double[::1] phi = phi_arr
    cdef Py_ssize_t t, p, i, j, k
    cdef double vmax, acc, v

    phi[dest] = 0.0
    for t in range(order.shape[0]):
        i = order[t]
        vmax = -INFINITY
        for p in range(out_ptr[i], out_ptr[i + 1]):
            k = out_edges[p]
            j = head[k]
            v = u[k] + phi[j] - penalty[j]
            V[k] = v
            if v > vmax:
                vmax = v
        if vmax == -INFINITY:
            continue
        acc = 0.0
        for p in range(out_ptr[i], out_ptr[i + 1]):
            acc += exp(V[out_edges[p]] - vmax)
        phi[i] = vmax + log(acc)
    return V_arr, phi_arr


def flows_forward(const double[::1] prob, const double[::1] x0,
                  const cnp.int64_t[::1] order, const cnp.int64_t[::1] out_ptr,
                  const cnp.int64_t[::1] out_edges, const cnp.int64_t[::1] head):
    """Propagate node demand ``x0`` along edge probabilities in topological order."""
    cdef Py_ssize_t m = prob.shape[0]
    x_arr = np.array(x0, dtype=np.float64, copy=True)
    f_arr = np.zeros(m)
    cdef double[::1] x = x_arr
    cdef double[::1] f = f_arr
    cdef Py_ssize_t t, p, i, k
    cdef double xi, fk

    for t in range(order.shape[0]):
        i = order[t]
        xi = x[i]
        if xi == 0.0:
            continue
        for p in range(out_ptr[i], out_ptr[i + 1]):
            k = out_edges[p]
            fk = xi * prob[k]
            f[k] = fk
            x[head[k]] += fk
    return x_arr, f_arr
