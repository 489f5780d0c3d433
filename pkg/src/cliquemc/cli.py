"""Command-line entry point: ``cliquemc <command> [options]``.

Exit codes: 0 success, 1 validation error (bad flags, bad config, failed
verification), 2 budget exceeded or unreachable target.

For every command except ``sweep``, ``--config FILE`` supplies option defaults
as ``key = value`` lines (keys are option names with ``_`` or ``-``); flags on
the command line win.  For ``sweep`` the file is the experiment plan.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import analytics, chains, exact, experiments, fixtures, graph_model
from .errors import BudgetExceededError, CliqueMCError, InvalidParameterError, UnreachableError
from .hamiltonian import GibbsWeightContext, TemperingLadder


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _graph(args) -> graph_model.PlantedGraph:
    if args.graph:
        return graph_model.load(args.graph)
    if args.n is None:
        raise InvalidParameterError("give --n (with --k or --alpha) or --graph")
    if args.k is not None and args.alpha is not None:
        raise InvalidParameterError("give --k or --alpha, not both")
    if args.alpha is not None:
        if not 0 < args.alpha < 1:
            raise InvalidParameterError("alpha must lie in (0, 1)")
        k = int(math.floor(args.n**args.alpha + 1e-9))
    else:
        k = args.k if args.k is not None else 0
    return graph_model.generate(args.n, k, args.seed)


def _ctx(args, n: int) -> GibbsWeightContext:
    beta = experiments.parse_beta(args.beta, n)
    if math.isinf(beta):
        raise InvalidParameterError("beta = inf is only meaningful for --dynamics greedy")
    return GibbsWeightContext(beta, experiments.build_hamiltonian(args.hamiltonian, n))


def _ladder(args, n: int, k: int, g) -> TemperingLadder:
    if not args.ladder_betas:
        raise InvalidParameterError("this dynamics needs --ladder-betas")
    cell = {
        "n": n, "k": k,
        "ladder_betas": [experiments.parse_beta(b, n) for b in args.ladder_betas.split(",")],
        "ladder_log_z": args.ladder_log_z,
        "level_move_prob": args.level_move_prob,
    }
    return experiments.build_ladder(cell, experiments.build_hamiltonian(args.hamiltonian, n), g)


# --- commands ------------------------------------------------------------------


def cmd_generate(args) -> int:
    g = _graph(args)
    _emit(graph_model.dumps(g), args.out)
    if args.out:
        print(f"wrote n={g.n} k={g.k} fingerprint={g.fingerprint()} to {args.out}")
    return 0


def cmd_run(args) -> int:
    dyn = chains.Dynamics(args.dynamics)
    g = None if dyn in (chains.Dynamics.BIRTH_DEATH_1D, chains.Dynamics.BIRTH_DEATH_2D) and args.graph is None else _graph(args)
    n = g.n if g is not None else args.n
    k = g.k if g is not None else (args.k or 0)
    if n is None:
        raise InvalidParameterError("give --n or --graph")
    size_t, over_t = chains.stop_targets(n, args.epsilon, args.gamma)
    cfg_kw = dict(
        dynamics=dyn, eta=args.eta, max_steps=args.max_steps, size_target=size_t,
        overlap_target=over_t, seed=experiments.derive_seed(args.seed, 1), thin=args.thin, debug=args.debug,
    )
    if dyn is chains.Dynamics.GREEDY:
        rec = chains.run_greedy(g, chains.CliqueState.empty(g), chains.ChainConfig(**cfg_kw))
    elif dyn is chains.Dynamics.METROPOLIS:
        ctx = _ctx(args, n)
        rec = chains.run_metropolis(g, ctx, chains.CliqueState.empty(g), chains.ChainConfig(beta=ctx.beta, **cfg_kw))
    elif dyn is chains.Dynamics.SIMULATED_TEMPERING:
        ladder = _ladder(args, n, k, g)
        rec = chains.run_simulated_tempering(
            g, ladder, chains.CliqueState.empty(g), 0, chains.ChainConfig(ladder=ladder, **cfg_kw)
        )
    elif dyn is chains.Dynamics.BIRTH_DEATH_1D:
        ctx = _ctx(args, n)
        cfg_kw["overlap_target"] = None
        rec = chains.run_birth_death_1d(n, ctx, args.eta, 0, chains.ChainConfig(beta=ctx.beta, **cfg_kw))
    else:
        ladder = _ladder(args, n, k, g)
        cfg_kw["overlap_target"] = None
        rec = chains.run_birth_death_2d(n, ladder.m, ladder, args.eta, (0, 0), chains.ChainConfig(ladder=ladder, **cfg_kw))
    summary = rec.summary()
    summary["graph_seed"] = args.seed
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rec.write_csv(out / "trajectory.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=chains._json_default) + "\n")
    print(json.dumps(summary, sort_keys=True, default=chains._json_default))
    return 0


def cmd_sweep(args) -> int:
    if args.config and args.plan:
        raise InvalidParameterError("give --config or --plan, not both")
    if args.config:
        plan = experiments.ExperimentPlan.load(args.config)
    elif args.plan:
        if args.plan not in experiments.STANDARD_PLANS:
            raise InvalidParameterError(f"unknown plan {args.plan!r}; known: {sorted(experiments.STANDARD_PLANS)}")
        plan = experiments.ExperimentPlan.from_text(experiments.STANDARD_PLANS[args.plan])
    else:
        raise InvalidParameterError("sweep needs --config or --plan")
    if args.seed is not None:
        plan.master_seed = args.seed
    if args.trials is not None:
        plan.trials = args.trials
    if not args.out:
        raise InvalidParameterError("sweep needs --out DIR")
    res = experiments.run_sweep(plan, args.out, workers=args.workers)
    sys.stdout.write((Path(args.out) / "cells.csv").read_text())
    print(f"wrote {len(res.rows)} trial rows to {args.out}", file=sys.stderr)
    return 0


def cmd_census(args) -> int:
    g = _graph(args)
    c = exact.census_graph(g, args.max_size, budget=args.budget)
    _emit(c.to_csv(), args.out)
    return 0


def _require(args, *names) -> None:
    # checked here rather than by argparse so that --config can supply them
    missing = [f"--{n}" for n in names if getattr(args, n) is None]
    if missing:
        raise InvalidParameterError(f"missing required option(s): {', '.join(missing)}")


def cmd_bottleneck(args) -> int:
    _require(args, "r")
    g = _graph(args)
    ctx = _ctx(args, g.n)
    if args.kind == "intersection":
        pf = exact.partition_functions(exact.census_graph(g, budget=args.budget), ctx)
        ratio = exact.bottleneck_ratio_intersection(pf, args.r)
        report = {"kind": "intersection", "r": args.r, "beta": ctx.beta,
                  "log_ratio": None if math.isinf(ratio) else ratio, "log_ratio_is_neg_inf": ratio == -math.inf}
    else:
        if args.q is None or args.p is None:
            raise InvalidParameterError("large-clique bottleneck needs --q and --p")
        idx = exact.enumerate_cliques(g, budget=args.budget)
        report = {"kind": "large-clique", "beta": ctx.beta,
                  **exact.bottleneck_ratio_large_clique(idx, g, ctx, args.q, args.p, args.r).as_dict()}
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def cmd_gateways(args) -> int:
    _require(args, "q")
    g = _graph(args)
    idx = exact.enumerate_cliques(g, budget=args.budget)
    gw = exact.compute_gateways(idx, g, args.q)
    lines = ["index,size,overlap,members"]
    for i in range(len(idx)):
        if gw[i]:
            members = " ".join(str(v) for v in idx.clique(i))
            lines.append(f"{i},{idx.sizes[i]},{idx.overlaps[i]},{members}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_hitting_time(args) -> int:
    g = _graph(args)
    ctx = _ctx(args, g.n)
    if args.target_size is None and args.target_overlap is None:
        raise InvalidParameterError("give --target-size and/or --target-overlap")
    idx = exact.enumerate_cliques(g, budget=args.budget)
    mask = None
    if args.target_size is not None:
        mask = idx.sizes >= args.target_size
    if args.target_overlap is not None:
        m2 = idx.overlaps >= args.target_overlap
        mask = m2 if mask is None else (mask | m2)
    t = exact.expected_hitting_time(idx, g, ctx, chains.CliqueState.empty(g), mask)
    _emit(json.dumps({"expected_steps": t, "states": len(idx), "beta": ctx.beta}) + "\n", args.out)
    return 0


def cmd_verify(args) -> int:
    results = fixtures.verify_small()
    text = "\n".join(r.line() for r in results) + "\n"
    failed = sum(not r.ok for r in results)
    text += f"{len(results) - failed}/{len(results)} checks passed\n"
    _emit(text, args.out)
    return 0 if failed == 0 else 1


def cmd_predict(args) -> int:
    if args.rho is not None:
        if args.alpha is None:
            raise InvalidParameterError("exponent needs --alpha, --rho and --gamma")
        e = analytics.asymptotic_exponent(args.alpha, args.rho, args.gamma if args.gamma is not None else 0.0)
        _emit(f"{e!r}\n", args.out)
        return 0
    if args.n is None:
        raise InvalidParameterError("predict needs --rho (exponent) or --n (table)")
    if args.k is not None:
        k = args.k
    elif args.alpha is not None:
        k = int(math.floor(args.n**args.alpha + 1e-9))
    else:
        raise InvalidParameterError("table needs --k or --alpha")
    q_max = args.q_max if args.q_max is not None else min(args.n, int(math.ceil(3 * math.log2(max(args.n, 2)))))
    lines = ["n,k,q,r,log_expected"]
    for q in range(min(q_max, args.n) + 1):
        for r in range(min(q, k) + 1):
            lines.append(f"{args.n},{k},{q},{r},{analytics.expected_census(args.n, k, q, r)!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", help="output file or directory")

    graph = _Parser(add_help=False)
    graph.add_argument("--n", type=int)
    graph.add_argument("--k", type=int)
    graph.add_argument("--alpha", type=float)
    graph.add_argument("--graph", help="graph file written by 'generate'")
    graph.add_argument("--budget", type=int, default=exact.DEFAULT_MAX_STATES, help="state or node budget")

    gibbs = _Parser(add_help=False)
    gibbs.add_argument("--beta", default="0", help="number or c*ln(n)")
    gibbs.add_argument("--hamiltonian", default="identity", help="'identity' or comma-separated h_0..h_n")

    p = _Parser(prog="cliquemc", description="Metropolis and tempering dynamics on cliques of planted graphs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("generate", parents=[common, graph], help="sample G(n, 1/2, k)")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("run", parents=[common, graph, gibbs], help="run one chain from the empty clique")
    s.add_argument("--dynamics", default="metropolis", choices=[d.value for d in chains.Dynamics])
    s.add_argument("--max-steps", type=int, default=100_000)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--eta", type=float, default=0.5)
    s.add_argument("--ladder-betas")
    s.add_argument("--ladder-log-z", default="first_moment")
    s.add_argument("--level-move-prob", type=float, default=0.5)
    s.add_argument("--thin", type=int)
    s.add_argument("--debug", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="run an experiment plan")
    s.add_argument("--plan", help=f"standard plan: {', '.join(experiments.STANDARD_PLANS)}")
    s.add_argument("--workers", type=int)
    s.add_argument("--trials", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("census", parents=[common, graph], help="exact W[q, r] table as CSV")
    s.add_argument("--max-size", type=int)
    s.set_defaults(func=cmd_census, budget=exact.DEFAULT_NODE_BUDGET)

    s = sub.add_parser("bottleneck", parents=[common, graph, gibbs], help="exact bottleneck log ratios")
    s.add_argument("--kind", choices=["intersection", "large-clique"], default="intersection")
    s.add_argument("--r", type=int)
    s.add_argument("--q", type=int)
    s.add_argument("--p", type=int)
    s.set_defaults(func=cmd_bottleneck)

    s = sub.add_parser("gateways", parents=[common, graph], help="list q-gateways")
    s.add_argument("--q", type=int)
    s.set_defaults(func=cmd_gateways)

    s = sub.add_parser("hitting-time", parents=[common, graph, gibbs], help="exact expected hitting time from the empty clique")
    s.add_argument("--target-size", type=int)
    s.add_argument("--target-overlap", type=int)
    s.set_defaults(func=cmd_hitting_time)

    s = sub.add_parser("verify", parents=[common], help="run the invariant suites")
    s.add_argument("--fixtures", choices=["small"], default="small")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("predict", parents=[common], help="first-moment predictions")
    s.add_argument("--alpha", type=float)
    s.add_argument("--rho", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--n", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--q-max", type=int)
    s.set_defaults(func=cmd_predict)
    return p


def _apply_config(parser: argparse.ArgumentParser, args, argv) -> argparse.Namespace:
    """Re-parse with ``--config`` values as defaults for the chosen subcommand."""
    kv = experiments.parse_kv(Path(args.config).read_text())
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in kv.items():
        if key not in dests or key in ("config", "help", "func"):
            raise InvalidParameterError(f"config key {key!r} is not an option of '{args.command}'")
        action = dests[key]
        if action.type is not None:
            value = action.type(value)
        elif isinstance(action, argparse._StoreTrueAction):
            value = value.strip().lower() in ("1", "true", "yes")
        defaults[key] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config and args.command != "sweep":
            args = _apply_config(parser, args, argv)
        if args.seed is None and args.command != "sweep":
            args.seed = 0
        return args.func(args)
    except (BudgetExceededError, UnreachableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CliqueMCError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
