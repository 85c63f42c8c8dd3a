"""Command-line front end. Every command writes CSV files into ``--out``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path as FsPath
from typing import Iterable, Sequence

import numpy as np

from rlca import analysis, estimation, psl
from rlca.fixtures import FIXTURES, braess_pair, load_fixture
from rlca.network import Edge, Network, NetworkError, enumerate_paths, format_network, load_network
from rlca.paths import evaluate_path, path_probabilities
from rlca.solver import InfeasibleValueError, Parameters, solve, solve_values

log = logging.getLogger("rlca")

USER_ERRORS = (NetworkError, ValueError, KeyError, InfeasibleValueError, OSError, RuntimeError)


# helpers -----------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: FsPath, header: Sequence[str], rows: Iterable[Sequence]) -> FsPath:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    log.info("wrote %s", path)
    return path


def parse_range(text: str) -> np.ndarray:
    """``lo:hi:step`` inclusive of both ends."""
    try:
        lo, hi, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise ValueError(f"range must look like lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise ValueError(f"bad range {text!r}")
    return analysis.grid(lo, hi, step)


def parse_floats(values: Sequence[str] | None) -> tuple[float, ...] | None:
    if not values:
        return None
    out = []
    for v in values:
        out.extend(float(t) for t in v.replace(",", " ").split())
    return tuple(out)


def load_net(spec: str | None) -> Network:
    if spec is None:
        raise ValueError("--network is required")
    if FsPath(spec).exists():
        return load_network(spec)
    if spec in FIXTURES:
        return load_fixture(spec)
    raise FileNotFoundError(f"network file {spec!r} not found (bundled: {', '.join(FIXTURES)})")


def build_params(args, net: Network) -> Parameters:
    beta = parse_floats(args.beta) or tuple(-1.0 for _ in net.attr_names)
    nodes = {}
    for item in args.kappa_node or ():
        node, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"--kappa-node expects i=v, got {item!r}")
        nodes[node] = float(val)
    params = Parameters(beta, kappa=args.kappa, kappa_nodes=nodes)
    params.kappa_vector(net)  # validates node names
    if len(beta) != len(net.attr_names):
        raise ValueError(
            f"--beta has {len(beta)} values, network has attributes {list(net.attr_names)}"
        )
    return params


def _out(args) -> FsPath:
    return FsPath(args.out)


# commands ----------------------------------------------------------------------


def cmd_solve(args) -> int:
    net = load_net(args.network)
    values = solve_values(net, build_params(args, net), args.dest)
    write_csv(_out(args) / "values.csv", ("edge", "V"), values.V.items())
    write_csv(
        _out(args) / "node_values.csv",
        ("node", "logsum", "adjusted_logsum"),
        (
            (n, values.logsum[net.node_index[n]], v)
            for n, v in values.adjusted_logsum.items()
        ),
    )
    print(f"solved {len(values.V)} edge values for destination {values.dest} ({values.method})")
    return 0


def cmd_assign(args) -> int:
    net = load_net(args.network)
    values, flows = solve(net, build_params(args, net), args.origin, args.dest, args.demand)
    plan = net.plan(values.dest)
    active = [k for k in range(len(net.edges)) if plan.edge_active[k]]
    write_csv(
        _out(args) / "flows.csv",
        ("edge", "P", "f"),
        ((net.edges[k].id, flows.edge_probs[k], flows.edge_flows[k]) for k in active),
    )
    write_csv(
        _out(args) / "node_flows.csv",
        ("node", "x"),
        ((n, flows.node_visits[i]) for i, n in enumerate(net.nodes) if plan.node_active[i]),
    )
    return 0


def cmd_paths(args) -> int:
    net = load_net(args.network)
    params = build_params(args, net)
    paths, overflow = enumerate_paths(
        net, args.origin, args.dest, max_paths=args.max_paths, max_depth=args.max_depth
    )
    if overflow:
        log.warning("path enumeration stopped at %d paths", args.max_paths)
    probs = path_probabilities(net, params, paths)
    rows = []
    for p in paths:
        ev = evaluate_path(net, params, p)
        rows.append((p.label, ev.u_r, ev.rho_r, probs[p]))
    write_csv(_out(args) / "paths.csv", ("path", "u_r", "rho_r", "prob"), rows)
    for label, *_, pr in rows:
        print(f"{label:<30} {pr:.4f}")
    if args.kappa_sweep:
        sweep_rows = []
        for k in parse_range(args.kappa_sweep):
            pk = path_probabilities(net, params.replace(kappa=float(k)), paths)
            sweep_rows.extend((float(k), p.label, pk[p]) for p in paths)
        write_csv(_out(args) / "paths_sweep.csv", ("kappa", "path", "prob"), sweep_rows)
    return 0


def cmd_welfare(args) -> int:
    net = load_net(args.network)
    params = build_params(args, net)
    w = analysis.welfare(net, params, args.origin, args.dest)
    grad_u = analysis.welfare_grad_utility(net, params, args.origin, args.dest)
    origin, dest = net.resolve_origin(args.origin), net.resolve_dest(args.dest)
    plan = net.plan(dest)
    grad_k = [
        (n, analysis.welfare_grad_kappa(net, params, n, origin, dest))
        for i, n in enumerate(net.nodes)
        if plan.node_active[i] and n != dest
    ]
    write_csv(_out(args) / "welfare.csv", ("quantity", "value"), [("welfare", w)])
    write_csv(_out(args) / "welfare_grad_u.csv", ("edge", "dW_du"), grad_u.items())
    write_csv(_out(args) / "welfare_grad_kappa.csv", ("node", "dW_dkappa"), grad_k)
    print(f"welfare {w:.6f}")
    return 0


def cmd_regularity(args) -> int:
    net = load_net(args.network)
    params = build_params(args, net)
    origin, dest = net.resolve_origin(args.origin), net.resolve_dest(args.dest)
    if args.remove:
        targets = [(net.edge(e).tail, e) for e in args.remove]
    else:
        plan = net.plan(dest)
        targets = [
            (n, e)
            for i, n in enumerate(net.nodes)
            if n not in (origin, dest) and plan.node_active[i] and plan.out_degree[i] >= 2
            for e in net.out_edges(n)
            if plan.edge_active[net.edge_index[e]]
        ]
    reports = [analysis.regularity_threshold(net, params, n, e, origin, dest) for n, e in targets]
    write_csv(
        _out(args) / "regularity.csv",
        ("node", "removed_edge", "threshold", "kappa_at_node", "violated", "outside_change"),
        (
            (r.node, r.removed_edge, r.threshold, r.kappa_at_node, r.violated, r.outside_change)
            for r in reports
        ),
    )
    path_rows = [
        (r.removed_edge, c.label, c.before, c.after, c.pct_change)
        for r in reports
        for c in r.paths
    ]
    write_csv(
        _out(args) / "regularity_paths.csv",
        ("removed_edge", "path", "before", "after", "pct_change"),
        path_rows,
    )
    print(f"{'edge removed':<14}{'condition':<24}{'violated':>9}")
    for r in reports:
        print(f"{r.removed_edge:<14}{'kappa_' + r.node + ' > ' + format(r.threshold, '.3f'):<24}{str(r.violated):>9}")
    return 0


def cmd_add_edge(args) -> int:
    net = load_net(args.network)
    params = build_params(args, net)
    attrs = parse_floats(args.attrs) or ()
    edge = Edge(args.edge_id, args.node, args.head, attrs)
    rep = analysis.edge_addition_test(net, params, args.node, edge, args.origin, args.dest)
    write_csv(
        _out(args) / "add_edge.csv",
        ("node", "new_edge", "lhs", "rhs", "welfare_before", "welfare_after", "improves"),
        [(rep.node, rep.new_edge, rep.lhs, rep.rhs, rep.welfare_before, rep.welfare_after, rep.improves)],
    )
    print(f"P(new edge) = {rep.lhs:.6f}, bound = {rep.rhs:.6f}, improves = {rep.improves}")
    return 0


def cmd_braess(args) -> int:
    sweep = parse_range(args.range)
    fixed_name = "kappa" if args.over == "x" else "x"
    for v in args.fixed:
        if args.over == "x":
            rows = analysis.braess_scan(sweep, over="x", kappa=v)
        else:
            rows = analysis.braess_scan(sweep, over="kappa", x=v)
        write_csv(
            _out(args) / f"braess_{args.over}_{fixed_name}{v:g}.csv",
            analysis.SCAN_HEADER,
            ((r.sweep, r.welfare_before, r.welfare_after, r.delta) for r in rows),
        )
    for v in args.fixed if args.over == "kappa" else ():
        print(f"x={v:g}: welfare gain ends at kappa={analysis.braess_kappa_threshold(v):.4f}")
    return 0


PSL_MODELS = ("MNL", "PSL", "PSL_PRIME", "GPSL", "APSL")


def _psl_config(model: str, args, beta_ps: float) -> psl.PslConfig:
    return psl.PslConfig(
        kind=model, theta=args.theta, beta_ps=beta_ps, lam=args.lam, tau=args.tau
    )


def cmd_psl(args) -> int:
    models = args.models or PSL_MODELS
    betas = parse_range(args.beta_ps_sweep) if args.beta_ps_sweep else [args.beta_ps]
    if args.braess:
        rows = []
        for m in models:
            for x in parse_range(args.braess):
                before, after = braess_pair(float(x))
                cfg = _psl_config(m, args, args.beta_ps)
                wb = psl.psl_welfare(cfg, *psl.network_paths_costs(before))
                wa = psl.psl_welfare(cfg, *psl.network_paths_costs(after))
                rows.append((m, float(x), wb, wa, wa - wb))
        write_csv(_out(args) / "psl_braess.csv", ("model",) + analysis.SCAN_HEADER, rows)
        return 0
    net = load_net(args.network)
    paths, costs = psl.network_paths_costs(net, args.cost_attr, args.origin, args.dest)
    labels = [">".join(p) for p in paths]
    prob_rows, welfare_rows = [], []
    for m in models:
        for b in betas:
            cfg = _psl_config(m, args, float(b))
            res = psl.psl_probabilities(cfg, paths, costs)
            if not res.converged:
                log.warning("%s did not converge at beta_ps=%g", m, b)
            prob_rows.extend(
                (m, float(b), lab, p, g) for lab, p, g in zip(labels, res.probabilities, res.gamma)
            )
            welfare_rows.append((m, float(b), psl.psl_welfare(cfg, paths, costs)))
    write_csv(_out(args) / "psl_probabilities.csv", ("model", "beta_ps", "path", "prob", "gamma"), prob_rows)
    write_csv(_out(args) / "psl_welfare.csv", ("model", "beta_ps", "welfare"), welfare_rows)
    return 0


def _specs(args, net: Network) -> list[estimation.ModelSpec]:
    attrs = tuple(args.attrs) if args.attrs else net.attr_names
    table = estimation.standard_specs(attrs)
    names = args.spec or ["RL", "RL-CA"]
    bad = [n for n in names if n not in table]
    if bad:
        raise ValueError(f"unknown spec {bad[0]!r}; choose from {', '.join(table)}")
    return [table[n] for n in names]


def _ls_baseline(args, net):
    beta = parse_floats(args.ls_baseline)
    return Parameters(beta) if beta else None


def cmd_estimate(args) -> int:
    net = load_net(args.network)
    if not args.obs:
        raise ValueError("--obs is required")
    obs = estimation.load_observations(args.obs)
    results = []
    for spec in _specs(args, net):
        res = estimation.estimate(spec, net, obs, ls_baseline=_ls_baseline(args, net))
        results.append(res)
        print(res.table())
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    (out / "estimates.csv").write_text(
        results[0].csv() + "".join(r.csv().split("\n", 1)[1] for r in results[1:]),
        encoding="utf-8",
    )
    (out / "estimates.txt").write_text("\n".join(r.table() for r in results), encoding="utf-8")
    return 0


def _parse_od(items, net: Network):
    if not items:
        return {(net.resolve_origin(None), d): 1.0 for d in (net.destinations or ())} or {
            (net.resolve_origin(None), net.resolve_dest(None)): 1.0
        }
    od = {}
    for item in items:
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"--od expects origin:dest[:weight], got {item!r}")
        od[(parts[0], parts[1])] = float(parts[2]) if len(parts) == 3 else 1.0
    return od


def cmd_simulate(args) -> int:
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    if args.synthetic:
        from rlca.synthetic import synthetic_corpus

        net, obs = synthetic_corpus(n=args.n or 1832, seed=args.seed)
        (out / "synthetic.net").write_text(format_network(net), encoding="utf-8")
    else:
        net = load_net(args.network)
        obs = estimation.simulate_observations(
            net, build_params(args, net), _parse_od(args.od, net), args.n or 1000, args.seed
        )
    (out / "observations.obs").write_text(estimation.format_observations(obs), encoding="utf-8")
    print(f"wrote {len(obs)} observations")
    return 0


def cmd_validate(args) -> int:
    net = load_net(args.network)
    if not args.obs:
        raise ValueError("--obs is required")
    obs = estimation.load_observations(args.obs)
    rows = estimation.validate(
        _specs(args, net), net, obs, n_pairs=args.splits, train_frac=args.train_frac, seed=args.seed
    )
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    (out / "test_errors.csv").write_text(estimation.validation_csv(rows), encoding="utf-8")
    by_model: dict[str, list[float]] = {}
    for r in rows:
        by_model.setdefault(r.model, []).append(r.test_error)
    for m, errs in by_model.items():
        print(f"{m:<8} mean test error {np.mean(errs):.4f} over {len(errs)} splits")
    return 0


# parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--network", help="network file or bundled fixture name")
    common.add_argument("--obs", help="observations file")
    common.add_argument("--kappa", type=float, default=0.0, help="default choice aversion")
    common.add_argument("--kappa-node", action="append", metavar="i=v", help="per-node kappa")
    common.add_argument("--beta", nargs="+", help="attribute coefficients (default -1 each)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--dest")
    common.add_argument("--origin")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="rlca", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    add("solve", cmd_solve, "edge values and node logsums")
    sp = add("assign", cmd_assign, "edge probabilities and expected flows")
    sp.add_argument("--demand", type=float, default=1.0)
    sp = add("paths", cmd_paths, "path utilities and probabilities")
    sp.add_argument("--kappa-sweep", metavar="lo:hi:step")
    sp.add_argument("--max-paths", type=int, default=100_000)
    sp.add_argument("--max-depth", type=int)
    add("welfare", cmd_welfare, "welfare and its gradients")
    sp = add("regularity", cmd_regularity, "edge-removal thresholds")
    sp.add_argument("--remove", action="append", metavar="EDGE", help="edge to remove (repeatable)")
    sp = add("add-edge", cmd_add_edge, "welfare test for a new edge")
    sp.add_argument("--node", required=True)
    sp.add_argument("--head", required=True)
    sp.add_argument("--edge-id", default="new")
    sp.add_argument("--attrs", nargs="+", default=[])
    sp = add("braess", cmd_braess, "welfare change from the Braess connector")
    sp.add_argument("--over", choices=("x", "kappa"), default="x")
    sp.add_argument("--range", default="0:3:0.1", metavar="lo:hi:step")
    sp.add_argument("--fixed", type=float, nargs="+", default=[1.0, 2.0])
    sp = add("psl", cmd_psl, "path-size logit baselines")
    sp.add_argument("--models", nargs="+", choices=PSL_MODELS)
    sp.add_argument("--theta", type=float, default=1.0)
    sp.add_argument("--beta-ps", type=float, default=1.0)
    sp.add_argument("--beta-ps-sweep", metavar="lo:hi:step")
    sp.add_argument("--lam", type=float, default=1.0)
    sp.add_argument("--tau", type=float, default=1e-6)
    sp.add_argument("--cost-attr", default="cost")
    sp.add_argument("--braess", metavar="lo:hi:step", help="Braess x sweep instead of --network")
    for name, func, help_ in (
        ("estimate", cmd_estimate, "maximum-likelihood estimation"),
        ("validate", cmd_validate, "out-of-sample test errors"),
    ):
        sp = add(name, func, help_)
        sp.add_argument("--spec", action="append", help="RL, RL-CA, RL-LS, CA&LS or CAxLS")
        sp.add_argument("--attrs", nargs="+", help="attributes in the utility (default all)")
        sp.add_argument("--ls-baseline", nargs="+", help="fixed baseline coefficients for LS")
        if name == "validate":
            sp.add_argument("--splits", type=int, default=20)
            sp.add_argument("--train-frac", type=float, default=0.8)
    sp = add("simulate", cmd_simulate, "sample trips")
    sp.add_argument("--n", type=int, help="trip count (default 1000, 1832 with --synthetic)")
    sp.add_argument("--od", action="append", metavar="origin:dest[:weight]")
    sp.add_argument("--synthetic", action="store_true", help="bundled grid network and corpus")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"rlca {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
