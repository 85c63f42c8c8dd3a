"""Maximum-likelihood estimation of link-based recursive logit specifications.

Utilities are linear in a per-destination design matrix. Besides selected
network attributes a specification may add

* ``kappa_CA``: coefficient on ``log|A^+_head|`` (0 for edges into the
  destination). A negative value is choice aversion ``kappa = -kappa_CA``.
* ``beta_LS``: coefficient on the link-size attribute (expected edge flow
  under a baseline model).
* ``kappa_CAxLS``: coefficient on the product of the two.

The likelihood of a trip is the product of its edge choice probabilities.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from rlca.network import Network, NetworkError
from rlca.solver import (
    InfeasibleValueError,
    Parameters,
    propagate,
    solve_values,
    values_acyclic,
    values_linear,
)

log = logging.getLogger(__name__)

CA, LS, CAXLS = "kappa_CA", "beta_LS", "kappa_CAxLS"


@dataclass(frozen=True)
class Observation:
    id: str
    origin: str
    dest: str
    edges: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        if not self.edges:
            raise ValueError(f"observation {self.id!r} has no edges")


def check_observation(net: Network, obs: Observation) -> None:
    try:
        first, last = net.edge(obs.edges[0]), net.edge(obs.edges[-1])
    except NetworkError as exc:
        raise NetworkError(f"observation {obs.id!r}: {exc}") from None
    if first.tail != obs.origin:
        raise NetworkError(f"observation {obs.id!r} does not start at {obs.origin!r}")
    if last.head != obs.dest:
        raise NetworkError(f"observation {obs.id!r} does not end at {obs.dest!r}")
    prev = first
    for eid in obs.edges[1:]:
        e = net.edge(eid)
        if e.tail != prev.head:
            raise NetworkError(f"observation {obs.id!r}: {eid!r} does not follow {prev.id!r}")
        prev = e


# observation files -------------------------------------------------------------


def parse_observations(text: str) -> list[Observation]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0].upper() != "OBS" or len(tok) < 5:
            raise ValueError(f"line {lineno}: expected 'OBS <id> <origin> <dest> <edge> ...'")
        out.append(Observation(tok[1], tok[2], tok[3], tuple(tok[4:])))
    return out


def load_observations(path: str | FsPath) -> list[Observation]:
    return parse_observations(FsPath(path).read_text(encoding="utf-8"))


def format_observations(observations: Iterable[Observation]) -> str:
    return "".join(
        f"OBS {o.id} {o.origin} {o.dest} {' '.join(o.edges)}\n" for o in observations
    )


# specifications ----------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Which columns enter the utility. ``attrs`` are network attribute names."""

    name: str
    attrs: tuple[str, ...]
    include_ca: bool = False
    include_ls: bool = False
    include_ca_x_ls: bool = False

    def __post_init__(self):
        object.__setattr__(self, "attrs", tuple(self.attrs))
        if self.include_ca_x_ls and not (self.include_ca and self.include_ls):
            raise ValueError("the CA x LS interaction needs both CA and LS terms")

    @property
    def coef_names(self) -> tuple[str, ...]:
        extra = []
        if self.include_ca:
            extra.append(CA)
        if self.include_ls:
            extra.append(LS)
        if self.include_ca_x_ls:
            extra.append(CAXLS)
        return self.attrs + tuple(extra)

    @property
    def base(self) -> ModelSpec:
        """The plain recursive logit on the same attributes."""
        return ModelSpec("RL", self.attrs)


def standard_specs(attrs: Sequence[str]) -> dict[str, ModelSpec]:
    attrs = tuple(attrs)
    return {
        "RL": ModelSpec("RL", attrs),
        "RL-CA": ModelSpec("RL-CA", attrs, include_ca=True),
        "RL-LS": ModelSpec("RL-LS", attrs, include_ls=True),
        "CA&LS": ModelSpec("CA&LS", attrs, include_ca=True, include_ls=True),
        "CAxLS": ModelSpec("CAxLS", attrs, True, True, True),
    }


def design_matrix(
    spec: ModelSpec, net: Network, dest: str, ls: np.ndarray | None = None
) -> np.ndarray:
    """Edge-by-coefficient matrix for one destination."""
    missing = [a for a in spec.attrs if a not in net.attr_names]
    if missing:
        raise KeyError(f"network has no attribute {missing[0]!r}")
    cols = [net.attr_matrix[:, net.attr_names.index(a)] for a in spec.attrs]
    ca = net.plan(dest).log_degree[net.head_index]
    if spec.include_ls:
        if ls is None:
            raise ValueError(f"spec {spec.name!r} needs a link-size attribute")
        ls = np.asarray(ls, dtype=float)
        if ls.shape != (len(net.edges),):
            raise ValueError("link-size vector does not match the edge count")
    if spec.include_ca:
        cols.append(ca)
    if spec.include_ls:
        cols.append(ls)
    if spec.include_ca_x_ls:
        cols.append(ca * ls)
    return np.column_stack(cols) if cols else np.zeros((len(net.edges), 0))


# link size ---------------------------------------------------------------------


def od_shares(observations: Iterable[Observation]) -> dict[tuple[str, str], float]:
    counts = Counter((o.origin, o.dest) for o in observations)
    total = sum(counts.values())
    return {od: c / total for od, c in sorted(counts.items())} if total else {}


def link_size_attribute(
    net: Network, baseline: Parameters, od_demand: Mapping[tuple[str, str], float]
) -> np.ndarray:
    """Expected edge flow under ``baseline``, summed over OD pairs with the given demand."""
    ls = np.zeros(len(net.edges))
    by_dest: dict[str, dict[str, float]] = {}
    for (o, d), w in od_demand.items():
        by_dest.setdefault(d, {})
        by_dest[d][o] = by_dest[d].get(o, 0.0) + w
    for d, origins in by_dest.items():
        probs = solve_values(net, baseline, d).probability_array()
        x0 = np.zeros(len(net.nodes))
        for o, w in origins.items():
            if not net.plan(d).node_active[net.node_index[o]]:
                raise NetworkError(f"origin {o!r} cannot reach {d!r}")
            x0[net.node_index[o]] += w
        ls += propagate(net, d, probs, x0)[1]
    return ls


# likelihood --------------------------------------------------------------------


@dataclass
class _DestBlock:
    dest: str
    X: np.ndarray
    idx: np.ndarray  # traversed edge indices
    cnt: np.ndarray  # traversal counts
    tails: np.ndarray


class Likelihood:
    """Log-likelihood of a fixed sample; counts are aggregated per destination and edge."""

    def __init__(
        self,
        spec: ModelSpec,
        net: Network,
        observations: Sequence[Observation],
        ls: np.ndarray | None = None,
    ):
        if not observations:
            raise ValueError("no observations")
        self.spec, self.net = spec, net
        self.n_obs = len(observations)
        counts: dict[str, Counter] = {}
        for obs in observations:
            check_observation(net, obs)
            counts.setdefault(obs.dest, Counter()).update(net.edge_index[e] for e in obs.edges)
        self.blocks = []
        for dest in sorted(counts):
            plan = net.plan(dest)
            idx = np.array(sorted(counts[dest]), dtype=np.int64)
            bad = idx[~plan.edge_active[idx]]
            if len(bad):
                raise NetworkError(
                    f"observed edge {net.edges[bad[0]].id!r} cannot reach {dest!r}"
                )
            cnt = np.array([counts[dest][k] for k in idx], dtype=float)
            X = design_matrix(spec, net, dest, ls)
            self.blocks.append(_DestBlock(dest, X, idx, cnt, net.tail_index[idx]))
        self.zero_pen = np.zeros(len(net.nodes))

    @property
    def n_params(self) -> int:
        return len(self.spec.coef_names)

    def __call__(self, theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} coefficients, got {theta.shape}")
        total = 0.0
        for b in self.blocks:
            u = b.X @ theta
            try:
                if self.net.plan(b.dest).acyclic:
                    V, phi = values_acyclic(self.net, b.dest, u, self.zero_pen)
                else:
                    V, phi = values_linear(self.net, b.dest, u, self.zero_pen)
            except InfeasibleValueError:
                return -math.inf
            total += float(b.cnt @ (V[b.idx] - phi[b.tails]))
        return total if math.isfinite(total) else -math.inf


def edge_probabilities(net: Network, dest: str, u: np.ndarray) -> np.ndarray:
    """Edge choice probabilities for utilities ``u`` with no extra penalty."""
    zero = np.zeros(len(net.nodes))
    plan = net.plan(dest)
    if plan.acyclic:
        V, phi = values_acyclic(net, dest, u, zero)
    else:
        V, phi = values_linear(net, dest, u, zero)
    p = np.zeros(len(net.edges))
    act = plan.edge_active
    p[act] = np.exp(V[act] - phi[net.tail_index[act]])
    return p


def log_likelihood(
    spec: ModelSpec,
    net: Network,
    theta: Sequence[float],
    observations: Sequence[Observation],
    ls: np.ndarray | None = None,
) -> float:
    return Likelihood(spec, net, observations, ls)(np.asarray(theta, dtype=float))


def central_gradient(f, x: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        h = rel_step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def central_hessian(f, x: np.ndarray, rel_step: float = 1e-4) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = len(x)
    h = rel_step * np.maximum(1.0, np.abs(x))
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * h[i] * h[j])
    return H


# estimation --------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateOptions:
    gtol: float = 1e-5
    xtol: float = 1e-9
    max_iter: int = 500
    grad_step: float = 1e-5
    hess_step: float = 1e-4


@dataclass(frozen=True)
class EstimationResult:
    spec: ModelSpec
    names: tuple[str, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    log_likelihood: float
    iterations: int
    elapsed: float
    converged: bool
    n_obs: int
    hessian_ok: bool = True
    ls: np.ndarray | None = field(default=None, repr=False)
    message: str = ""

    @property
    def t_stats(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.std_errors > 0, self.coefficients / self.std_errors, np.nan)

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def confidence_interval(self, level: float = 0.99) -> np.ndarray:
        z = norm.ppf(0.5 + level / 2)
        return np.column_stack(
            [self.coefficients - z * self.std_errors, self.coefficients + z * self.std_errors]
        )

    @property
    def ca_outside_theory(self) -> bool:
        """A positive CA coefficient means choice seeking, outside ``kappa >= 0``."""
        return CA in self.names and self.coef(CA) > 0

    def analysis_parameters(self) -> Parameters:
        """Attribute coefficients and ``kappa = -kappa_CA`` clipped at 0."""
        beta = self.coefficients[: len(self.spec.attrs)]
        kappa = max(0.0, -self.coef(CA)) if CA in self.names else 0.0
        return Parameters(tuple(beta), kappa=kappa)

    def table(self) -> str:
        lines = [
            f"Model: {self.spec.name}",
            f"{'Parameter':<14}{'Estimate':>12}{'Std. Error':>12}{'t-test':>10}",
        ]
        for name, b, s, t in zip(self.names, self.coefficients, self.std_errors, self.t_stats):
            lines.append(f"{name:<14}{b:>12.4f}{s:>12.4f}{t:>10.2f}")
        lines.append(f"{'LL':<14}{self.log_likelihood:>12.4f}")
        lines.append(f"{'Observations':<14}{self.n_obs:>12d}")
        lines.append(f"{'Elapsed (sec)':<14}{self.elapsed:>12.2f}")
        lines.append(f"{'Converged':<14}{str(self.converged):>12}")
        if self.ca_outside_theory:
            lines.append("note: kappa_CA > 0 lies outside the choice-aversion range")
        if not self.hessian_ok:
            lines.append("note: Hessian not negative definite; standard errors unavailable")
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "parameter", "estimate", "std_error", "t_stat"])
        for row in zip(self.names, self.coefficients, self.std_errors, self.t_stats):
            w.writerow([self.spec.name, row[0], *map(repr, map(float, row[1:]))])
        w.writerow([self.spec.name, "LL", repr(self.log_likelihood), "", ""])
        return buf.getvalue()


def estimate(
    spec: ModelSpec,
    net: Network,
    observations: Sequence[Observation],
    init: Sequence[float] | None = None,
    options: EstimateOptions = EstimateOptions(),
    ls: np.ndarray | None = None,
    ls_baseline: Parameters | None = None,
) -> EstimationResult:
    """Maximise the log-likelihood with BFGS on central-difference gradients.

    The optimiser works on the mean log-likelihood per trip, so ``gtol``
    bounds the per-trip gradient.

    Link-size specs need the LS attribute. It is taken from ``ls`` if given,
    else computed under ``ls_baseline``, else under a first-stage RL estimate
    on the same sample.
    """
    t0 = time.perf_counter()
    if spec.include_ls and ls is None:
        if ls_baseline is None:
            first = estimate(spec.base, net, observations, options=options)
            ls_baseline = Parameters(tuple(first.coefficients))
        ls = link_size_attribute(net, ls_baseline, od_shares(observations))

    lik = Likelihood(spec, net, observations, ls)
    k = lik.n_params
    x0 = np.zeros(k) if init is None else np.asarray(init, dtype=float)
    if x0.shape != (k,) or not np.all(np.isfinite(x0)):
        raise ValueError(f"init must hold {k} finite values")

    # per-trip scale keeps the gradient tolerance meaningful for any sample size
    def negll(x):
        v = lik(x)
        return -v / lik.n_obs if math.isfinite(v) else 1e300

    def grad(x):
        return central_gradient(negll, x, options.grad_step)

    sol = minimize(
        negll,
        x0,
        jac=grad,
        method="BFGS",
        options={
            "gtol": options.gtol,
            "norm": np.inf,
            "xrtol": options.xtol,
            "maxiter": options.max_iter,
        },
    )
    theta = sol.x
    gnorm = float(np.abs(grad(theta)).max())
    converged = bool(sol.status == 0 or gnorm <= options.gtol)

    H = central_hessian(lik, theta, options.hess_step)
    se = np.full(k, np.nan)
    hessian_ok = False
    try:
        cov = np.linalg.inv(-H)
        d = np.diag(cov)
        if np.all(d > 0) and np.all(np.isfinite(d)):
            se, hessian_ok = np.sqrt(d), True
    except np.linalg.LinAlgError:
        pass

    return EstimationResult(
        spec=spec,
        names=spec.coef_names,
        coefficients=theta,
        std_errors=se,
        log_likelihood=float(lik(theta)),
        iterations=int(sol.nit),
        elapsed=time.perf_counter() - t0,
        converged=converged,
        n_obs=lik.n_obs,
        hessian_ok=hessian_ok,
        ls=ls,
        message=str(sol.message),
    )


# simulation --------------------------------------------------------------------


def _normalise_od(od) -> list[tuple[str, str, float]]:
    if isinstance(od, Mapping):
        items = [(o, d, w) for (o, d), w in od.items()]
    else:
        items = [(t[0], t[1], t[2] if len(t) > 2 else 1.0) for t in od]
    if not items:
        raise ValueError("no OD pairs")
    return items


def sample_paths(
    net: Network,
    probs_by_dest: Mapping[str, np.ndarray],
    od,
    n: int,
    seed: int | None = None,
    max_steps: int = 10_000,
    id_prefix: str = "",
) -> list[Observation]:
    """Draw ``n`` trips by sequential edge sampling from per-destination probabilities."""
    if n == 0:
        return []
    items = _normalise_od(od)
    rng = np.random.default_rng(seed)
    w = np.array([t[2] for t in items], dtype=float)
    which = rng.choice(len(items), size=n, p=w / w.sum())
    out: list[Observation | None] = [None] * n
    for d in dict.fromkeys(t[1] for t in items):
        plan = net.plan(d)
        p = probs_by_dest[d]
        trips = np.flatnonzero(np.array([items[j][1] == d for j in which]))
        if not len(trips):
            continue
        # cumulative probabilities per node segment, offset by the node index
        seg_p = p[plan.out_edges]
        seg_node = np.repeat(np.arange(len(net.nodes)), np.diff(plan.out_ptr))
        csum = np.cumsum(seg_p)
        starts = np.concatenate([[0.0], csum])[plan.out_ptr[:-1]][seg_node]
        key = seg_node + (csum - starts)
        cur = np.array([net.node_index[items[which[t]][0]] for t in trips], dtype=np.int64)
        for c in cur:
            if not plan.node_active[c]:
                raise NetworkError(f"origin {net.nodes[c]!r} cannot reach {d!r}")
        routes: list[list[int]] = [[] for _ in trips]
        alive = np.arange(len(trips))
        for _ in range(max_steps):
            if not len(alive):
                break
            nodes = cur[alive]
            r = rng.random(len(alive))
            pos = np.searchsorted(key, nodes + r, side="right")
            pos = np.minimum(pos, plan.out_ptr[nodes + 1] - 1)
            pos = np.maximum(pos, plan.out_ptr[nodes])
            chosen = plan.out_edges[pos]
            for t, k in zip(alive, chosen):
                routes[t].append(int(k))
            cur[alive] = net.head_index[chosen]
            alive = alive[cur[alive] != plan.dest]
        else:
            if len(alive):
                raise RuntimeError(f"trip exceeded {max_steps} steps without reaching {d!r}")
        for t, route in zip(trips, routes):
            o, dd, _ = items[which[t]]
            out[t] = Observation(
                f"{id_prefix}{t}", o, dd, tuple(net.edges[k].id for k in route)
            )
    return out  # type: ignore[return-value]


def simulate_observations(
    net: Network,
    params: Parameters,
    od,
    n: int,
    seed: int | None = None,
    max_steps: int = 10_000,
) -> list[Observation]:
    """Trips sampled from the choice-aversion model with ``params``."""
    dests = dict.fromkeys(t[1] for t in _normalise_od(od))
    probs = {d: solve_values(net, params, d).probability_array() for d in dests}
    return sample_paths(net, probs, od, n, seed, max_steps)


def simulate_from_spec(
    spec: ModelSpec,
    net: Network,
    theta: Sequence[float],
    od,
    n: int,
    seed: int | None = None,
    ls: np.ndarray | None = None,
    max_steps: int = 10_000,
) -> list[Observation]:
    """Trips sampled from an estimation specification at coefficients ``theta``."""
    theta = np.asarray(theta, dtype=float)
    dests = dict.fromkeys(t[1] for t in _normalise_od(od))
    probs = {d: edge_probabilities(net, d, design_matrix(spec, net, d, ls) @ theta) for d in dests}
    return sample_paths(net, probs, od, n, seed, max_steps)


# validation --------------------------------------------------------------------


def split_samples(
    observations: Sequence[Observation], n_pairs: int, train_frac: float = 0.8, seed: int | None = None
) -> list[tuple[list[Observation], list[Observation]]]:
    if not observations:
        raise ValueError("no observations to split")
    n = len(observations)
    n_train = int(round(train_frac * n))
    if not 0 < n_train < n:
        raise ValueError(f"train fraction {train_frac} leaves an empty train or test set")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_pairs):
        perm = rng.permutation(n)
        out.append(
            ([observations[i] for i in perm[:n_train]], [observations[i] for i in perm[n_train:]])
        )
    return out


def test_error(
    spec: ModelSpec,
    net: Network,
    theta: Sequence[float],
    holdout: Sequence[Observation],
    ls: np.ndarray | None = None,
) -> float:
    """Mean negative log-probability of the held-out trips."""
    return -log_likelihood(spec, net, theta, holdout, ls) / len(holdout)


test_error.__test__ = False  # keep pytest from collecting it


@dataclass(frozen=True)
class ValidationRow:
    split: int
    model: str
    test_error: float
    train_ll: float
    n_train: int
    n_test: int


def validate(
    specs: Sequence[ModelSpec],
    net: Network,
    observations: Sequence[Observation],
    n_pairs: int = 20,
    train_frac: float = 0.8,
    seed: int | None = None,
    options: EstimateOptions = EstimateOptions(),
    ls: np.ndarray | None = None,
) -> list[ValidationRow]:
    """Fit every spec on each training sample and score it on the matching holdout."""
    rows = []
    for s, (train, test) in enumerate(split_samples(observations, n_pairs, train_frac, seed)):
        for spec in specs:
            res = estimate(spec, net, train, options=options, ls=ls)
            err = test_error(spec, net, res.coefficients, test, res.ls)
            rows.append(ValidationRow(s, spec.name, err, res.log_likelihood, len(train), len(test)))
            log.info("split %d %s test error %.4f", s, spec.name, err)
    return rows


def validation_csv(rows: Sequence[ValidationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["split", "model", "test_error", "train_ll", "n_train", "n_test"])
    for r in rows:
        w.writerow([r.split, r.model, repr(r.test_error), repr(r.train_ll), r.n_train, r.n_test])
    return buf.getvalue()
