"""Path-size logit baselines over an explicit path set.

Paths are sequences of edge ids and ``costs`` maps edge id to a positive
cost. Path utilities are ``-theta * c_r + beta_ps * log(gamma_r)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import root

from rlca.network import enumerate_paths


class PslKind(str, enum.Enum):
    MNL = "MNL"
    PSL = "PSL"
    PSL_PRIME = "PSL_PRIME"
    GPSL = "GPSL"
    APSL = "APSL"


@dataclass(frozen=True)
class PslConfig:
    kind: PslKind = PslKind.PSL
    theta: float = 1.0
    beta_ps: float = 1.0
    lam: float = 0.0
    tau: float = 1e-6
    tol: float = 1e-10
    max_iter: int = 10_000
    damping: float = 0.5
    solver: str = "root"  # APSL only: "root" or "picard"

    def __post_init__(self):
        object.__setattr__(self, "kind", PslKind(self.kind))
        if not self.theta > 0:
            raise ValueError("theta must be > 0")
        if self.beta_ps < 0 or self.lam < 0:
            raise ValueError("beta_ps and lam must be >= 0")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.solver not in ("root", "picard"):
            raise ValueError(f"unknown APSL solver {self.solver!r}")


@dataclass(frozen=True)
class PslResult:
    probabilities: np.ndarray
    gamma: np.ndarray
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0


class _PathSet:
    """Edge-path incidence with per-edge and per-path costs."""

    def __init__(self, paths: Sequence[Sequence[str]], costs: Mapping[str, float]):
        if not paths:
            raise ValueError("empty path set")
        edges = list(dict.fromkeys(e for p in paths for e in p))
        missing = [e for e in edges if e not in costs]
        if missing:
            raise KeyError(f"no cost for edge {missing[0]!r}")
        self.D = np.array([[e in p for p in paths] for e in edges], dtype=float)
        self.c = np.array([costs[e] for e in edges], dtype=float)
        self.cr = self.D.T @ self.c
        # share of each edge in its path's cost, zero where unused
        with np.errstate(divide="ignore", invalid="ignore"):
            self.share = self.D * self.c[:, None] / self.cr[None, :]

    def require_positive(self):
        bad = np.flatnonzero(self.cr <= 0)
        if len(bad):
            raise ValueError(f"path {bad[0]} has non-positive cost; path size terms undefined")

    def gamma_weighted(self, weight: np.ndarray) -> np.ndarray:
        """``sum_a share_ar / sum_r' W[r, r'] delta_ar'`` for a path-pair weight matrix."""
        # denom[a, r] = sum_r' delta_ar' * W[r, r']
        denom = self.D @ weight.T
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(self.D > 0, self.share / denom, 0.0)
        return terms.sum(axis=0)


def path_size_terms(
    kind: PslKind | str,
    paths: Sequence[Sequence[str]],
    costs: Mapping[str, float],
    lam: float = 0.0,
    probabilities: np.ndarray | None = None,
) -> np.ndarray:
    """Path size term per path; APSL needs the current ``probabilities``."""
    kind = PslKind(kind)
    ps = _PathSet(paths, costs)
    ps.require_positive()
    R = len(ps.cr)
    if kind in (PslKind.PSL, PslKind.MNL):
        W = np.ones((R, R))
    elif kind is PslKind.PSL_PRIME:
        W = np.broadcast_to(ps.cr.min() / ps.cr, (R, R))
    elif kind is PslKind.GPSL:
        W = (ps.cr[:, None] / ps.cr[None, :]) ** lam
    elif kind is PslKind.APSL:
        if probabilities is None:
            raise ValueError("APSL path size terms need probabilities")
        P = np.asarray(probabilities, dtype=float)
        W = P[None, :] / P[:, None]
    else:  # pragma: no cover
        raise ValueError(kind)
    return ps.gamma_weighted(np.asarray(W))


def _logit(ps: _PathSet, gamma: np.ndarray, config: PslConfig) -> np.ndarray:
    w = -config.theta * ps.cr
    if config.beta_ps:
        w = w + config.beta_ps * np.log(gamma)
    w = np.exp(w - w.max())
    return w / w.sum()


def psl_probabilities(
    config: PslConfig, paths: Sequence[Sequence[str]], costs: Mapping[str, float]
) -> PslResult:
    if PslKind(config.kind) is PslKind.APSL:
        return apsl_solve(config, paths, costs)
    ps = _PathSet(paths, costs)
    if config.kind is PslKind.MNL or config.beta_ps == 0:
        gamma = np.ones(len(ps.cr))
    else:
        gamma = path_size_terms(config.kind, paths, costs, config.lam)
    return PslResult(_logit(ps, gamma, config), gamma)


def in_domain(P: np.ndarray, tau: float, slack: float = 1e-12) -> bool:
    R = len(P)
    return bool(
        np.all(P >= tau - slack)
        and np.all(P <= 1 - (R - 1) * tau + slack)
        and abs(P.sum() - 1) <= 1e-9
    )


def apsl_map(
    config: PslConfig, paths: Sequence[Sequence[str]], costs: Mapping[str, float], P: np.ndarray
) -> np.ndarray:
    """One application of the APSL fixed-point map."""
    ps = _PathSet(paths, costs)
    return _apsl_map(ps, config, P)


def _apsl_map(ps: _PathSet, config: PslConfig, P: np.ndarray) -> np.ndarray:
    R = len(ps.cr)
    W = P[None, :] / P[:, None]
    g = _logit(ps, ps.gamma_weighted(W), config)
    return config.tau + (1 - R * config.tau) * g


def _picard(ps: _PathSet, config: PslConfig, P: np.ndarray):
    for it in range(1, config.max_iter + 1):
        nxt = (1 - config.damping) * P + config.damping * _apsl_map(ps, config, P)
        assert in_domain(nxt, config.tau), "iterate left the feasible box"
        step = np.abs(nxt - P).max()
        P = nxt
        if step <= config.tol:
            return P, it, True
    return P, config.max_iter, False


def apsl_solve(
    config: PslConfig, paths: Sequence[Sequence[str]], costs: Mapping[str, float]
) -> PslResult:
    """Solve the APSL fixed point starting from the uniform distribution.

    The default ``root`` solver applies a hybrid Newton method to
    ``P - map(P)``; it also finds fixed points that repel plain iteration.
    Damped iteration (``picard``) is used when asked for or as a fallback.
    """
    ps = _PathSet(paths, costs)
    ps.require_positive()
    R = len(ps.cr)
    if config.tau * R > 1:
        raise ValueError("tau times the number of paths must not exceed 1")
    start = np.full(R, 1.0 / R)

    def residual(P):
        return float(np.abs(P - _apsl_map(ps, config, P)).max())

    P, iters, ok = None, 0, False
    if config.solver == "root":
        with np.errstate(all="ignore"):
            sol = root(lambda p: p - _apsl_map(ps, config, np.clip(p, 1e-300, None)), start,
                       method="hybr", options={"xtol": 1e-14})
        cand = sol.x
        if np.all(np.isfinite(cand)) and in_domain(cand, config.tau) and residual(cand) <= config.tol:
            P, iters, ok = cand, int(sol.nfev), True
    if P is None:
        P, iters, ok = _picard(ps, config, start)
    gamma = ps.gamma_weighted(P[None, :] / P[:, None])
    return PslResult(P, gamma, ok, iters, residual(P))


def psl_welfare(
    config: PslConfig, paths: Sequence[Sequence[str]], costs: Mapping[str, float]
) -> float:
    """Log-sum of corrected path utilities."""
    res = psl_probabilities(config, paths, costs)
    cr = _PathSet(paths, costs).cr
    w = -config.theta * cr
    if config.kind is not PslKind.MNL and config.beta_ps:
        w = w + config.beta_ps * np.log(res.gamma)
    m = w.max()
    return float(m + math.log(np.exp(w - m).sum()))


def network_paths_costs(net, cost_attr: str = "cost", origin=None, dest=None):
    """Enumerated paths (as edge-id tuples) and the per-edge cost map of ``net``."""
    if cost_attr not in net.attr_names:
        raise KeyError(f"network has no attribute {cost_attr!r}")
    col = net.attr_names.index(cost_attr)
    paths = [p.edges for p in enumerate_paths(net, origin, dest).paths]
    costs = {e.id: e.attrs[col] for e in net.edges}
    return paths, costs
