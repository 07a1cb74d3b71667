"""Command-line surface.

Subcommands: verify a single instance, tighten a perturbation bound by
repeated 2% shrinking, run a benchmark directory to CSV, generate random
suites, and render figures from bench CSV. Exit codes for verify:
10 = sat, 20 = unsat, 0 = unknown/timeout, 2 = usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import multiprocessing as mp
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import gen
from .network import ParseError, load_network
from .query import QueryFormatError, load_query, targeted_robustness_query
from .search import Result, SearchConfig, Verdict, complete_search
from .soi import SoiConfig

EXIT_SAT = 10
EXIT_UNSAT = 20
EXIT_INCONCLUSIVE = 0
EXIT_USAGE = 2

_LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING}


def _setup_logging():
    level = os.environ.get("SOIVERIFY_LOG", "warning").lower()
    logging.basicConfig(
        level=_LOG_LEVELS.get(level, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _config_from_args(args, seed) -> SearchConfig:
    soi = SoiConfig(
        T=args.T,
        beta=args.beta,
        seed=seed,
        strategy=args.strategy,
        visited_tracking_max=args.visited_tracking_max,
    )
    return SearchConfig(
        soi=soi,
        gamma=args.gamma,
        static_depth=args.static_depth,
        heuristic=args.heuristic,
        timeout=args.timeout,
        node_limit=args.node_limit,
        trace=getattr(args, "trace", None) is not None,
    )


def _config_echo(cfg: SearchConfig, portfolio: int | None = None) -> dict:
    echo = {
        "strategy": cfg.soi.strategy,
        "heuristic": cfg.heuristic,
        "T": cfg.soi.T,
        "beta": cfg.soi.beta,
        "gamma": cfg.gamma,
        "seed": cfg.soi.seed,
        "static_depth": cfg.static_depth,
        "timeout": cfg.timeout,
        "node_limit": cfg.node_limit,
        "visited_tracking_max": cfg.soi.visited_tracking_max,
    }
    if portfolio:
        echo["portfolio"] = portfolio
    return echo


def _result_record(instance: str, verdict: Verdict, cfg_echo: dict, net=None) -> dict:
    witness = None
    if verdict.witness is not None:
        alpha = verdict.witness
        if net is not None:
            from .network import VarIndex

            alpha = alpha[VarIndex(net).input_ids]
        witness = [float(v) for v in alpha]
    return {
        "instance": instance,
        "verdict": verdict.result.value,
        "witness": witness,
        "stats": {
            "nodes": verdict.stats.nodes,
            "proposals": verdict.stats.proposals,
            "lp_pivots": verdict.stats.lp_pivots,
        },
        "config": cfg_echo,
        "wall_time_s": round(verdict.stats.wall_time_s, 6),
    }


def _exit_code(result: Result) -> int:
    if result is Result.SAT:
        return EXIT_SAT
    if result is Result.UNSAT:
        return EXIT_UNSAT
    return EXIT_INCONCLUSIVE


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = int.from_bytes(os.urandom(4), "little")
    print(f"seed not given, using {seed}", file=sys.stderr)
    return seed


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _portfolio_member(net_path, query_path, cfg, queue, member_id):
    net = load_network(net_path)
    query = load_query(query_path, net)
    verdict = complete_search(net, query, cfg)
    queue.put((member_id, verdict.result.value,
               None if verdict.witness is None else list(verdict.witness),
               verdict.stats.nodes, verdict.stats.proposals,
               verdict.stats.lp_pivots))


def _run_portfolio(args, seed) -> tuple[Verdict, SearchConfig]:
    """Independent engine instances with distinct seeds and heuristics;
    first definitive verdict wins and the rest are cancelled."""
    n = args.portfolio
    heuristics = ["pi", "static"]
    seeds = np.random.SeedSequence(seed).generate_state(n)
    configs = []
    for i in range(n):
        base = _config_from_args(args, int(seeds[i]))
        configs.append(replace(base, heuristic=heuristics[i % len(heuristics)]))
    ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
    queue = ctx.Queue()
    procs = [
        ctx.Process(
            target=_portfolio_member,
            args=(args.network, args.query, cfg, queue, i),
        )
        for i, cfg in enumerate(configs)
    ]
    for p in procs:
        p.start()
    deadline = time.monotonic() + (args.timeout or 3600.0) + 5.0
    winner = None
    pending = len(procs)
    while pending and time.monotonic() < deadline:
        try:
            member = queue.get(timeout=0.1)
        except Exception:
            if not any(p.is_alive() for p in procs):
                break
            continue
        pending -= 1
        if member[1] in ("sat", "unsat"):
            winner = member
            break
        if winner is None:
            winner = member
    for p in procs:
        if p.is_alive():
            p.terminate()
    for p in procs:
        p.join()
    from .search import SearchStats

    if winner is None:
        verdict = Verdict(Result.TIMEOUT, None, SearchStats())
        return verdict, configs[0]
    member_id, result, witness, nodes, proposals, pivots = winner
    verdict = Verdict(
        Result(result),
        None if witness is None else np.asarray(witness),
        SearchStats(nodes=nodes, proposals=proposals, lp_pivots=pivots),
    )
    return verdict, configs[member_id]


def cmd_verify(args) -> int:
    try:
        net = load_network(args.network)
        query = load_query(args.query, net)
    except (OSError, ParseError, QueryFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    seed = _resolve_seed(args)
    t0 = time.monotonic()
    if args.portfolio and args.portfolio > 1:
        verdict, cfg = _run_portfolio(args, seed)
        verdict.stats.wall_time_s = time.monotonic() - t0
        echo = _config_echo(cfg, portfolio=args.portfolio)
    else:
        cfg = _config_from_args(args, seed)
        if args.dump_lp:
            _dump_root_lp(net, query, args.dump_lp)
        verdict = complete_search(net, query, cfg)
        echo = _config_echo(cfg)
    record = _result_record(args.network, verdict, echo, net=net)
    print(json.dumps(record, sort_keys=True))
    if args.trace is not None and verdict.trace is not None:
        with open(args.trace, "w") as fh:
            for rec in verdict.trace:
                fh.write(json.dumps(rec) + "\n")
    return _exit_code(verdict.result)


def _dump_root_lp(net, query, path):
    from .bounds import PhaseFixings, back_substitute, detect_fixed
    from .lp import write_lp_text
    from .query import encode
    from .relaxation import build_relaxation

    cs = encode(net, query)
    fix = PhaseFixings.all_free(cs.index.n_relus)
    bm = back_substitute(net, query.input_box, fix)
    if not bm.infeasible:
        fix = detect_fixed(bm, cs.index, fix)
    write_lp_text(build_relaxation(cs, bm, fix).lp, path)


# ---------------------------------------------------------------------------
# tighten-bound
# ---------------------------------------------------------------------------

def cmd_tighten_bound(args) -> int:
    try:
        net = load_network(args.network)
    except (OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.eps0 <= 0:
        print("error: --eps0 must be > 0", file=sys.stderr)
        return EXIT_USAGE
    seed = _resolve_seed(args)
    x0 = np.asarray(args.x0, dtype=np.float64)
    eps = args.eps0
    attacked = args.eps0
    certified = None
    iterations = []
    witnesses = 0
    stop = "inconclusive"
    while len(iterations) < args.max_iterations:
        eps = (1.0 - args.step) * eps
        query = targeted_robustness_query(
            net, x0, eps, args.true_label, args.target_label, domain=args.domain
        )
        cfg = _config_from_args(args, seed)
        cfg = replace(cfg, timeout=args.per_query_timeout)
        verdict = complete_search(net, query, cfg)
        iterations.append(
            {
                "eps": eps,
                "verdict": verdict.result.value,
                "wall_time_s": round(verdict.stats.wall_time_s, 6),
            }
        )
        if verdict.result is Result.SAT:
            attacked = eps
            witnesses += 1
            continue
        if verdict.result is Result.UNSAT:
            certified = eps
            stop = "certified"
        else:
            stop = verdict.result.value
        break
    else:
        # x0 is adversarial on its own (or nearly so): every shrunken ball
        # stays satisfiable, so give up after the iteration budget
        stop = "iteration_limit"
    report = {
        "eps0": args.eps0,
        "step": args.step,
        "attacked_eps": attacked,
        "certified_floor": certified,
        "reduction": 1.0 - attacked / args.eps0,
        "iterations": iterations,
        "witnesses_found": witnesses,
        "stopped_because": stop,
        "config": {"seed": seed, "strategy": args.strategy, "T": args.T},
    }
    print(json.dumps(report, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _parse_config_token(token: str):
    """mcmc+pi, walksat+static, lponly+pi, with optional +T<k> suffix."""
    strategy, heuristic, T = "mcmc", "pi", None
    for part in token.split("+"):
        if part in ("mcmc", "walksat", "lponly"):
            strategy = part
        elif part in ("pi", "static"):
            heuristic = part
        elif part.startswith("T"):
            T = int(part[1:])
        else:
            raise ValueError(f"bad config token {part!r} in {token!r}")
    return strategy, heuristic, T


def _bench_config(args, strategy, heuristic, T) -> SearchConfig:
    soi = SoiConfig(
        T=T if T is not None else args.T,
        beta=args.beta,
        seed=args.seed if args.seed is not None else 0,
        strategy=strategy,
        visited_tracking_max=args.visited_tracking_max,
    )
    return SearchConfig(
        soi=soi,
        gamma=args.gamma,
        static_depth=args.static_depth,
        heuristic=heuristic,
        timeout=args.timeout,
        node_limit=args.node_limit,
    )


def run_bench(directory, configs, args):
    """Per-instance rows under every config, plus per-config summaries."""
    instances = gen.list_suite(directory)
    if not instances:
        raise ValueError(f"no instances found in {directory}")
    rows = []
    for label, cfg in configs:
        for name, net_path, query_path in instances:
            net = load_network(net_path)
            query = load_query(query_path, net)
            verdict = complete_search(net, query, cfg)
            rows.append(
                {
                    "instance": name,
                    "config": label,
                    "verdict": verdict.result.value,
                    "wall_time_s": round(verdict.stats.wall_time_s, 6),
                    "nodes": verdict.stats.nodes,
                    "proposals": verdict.stats.proposals,
                }
            )
    summary = []
    for label, _ in configs:
        mine = [r for r in rows if r["config"] == label]
        solved = [r for r in mine if r["verdict"] in ("sat", "unsat")]
        summary.append(
            {
                "config": label,
                "solved": len(solved),
                "time_on_solved_s": round(sum(r["wall_time_s"] for r in solved), 6),
            }
        )
    return rows, summary


BENCH_FIELDS = ["instance", "config", "verdict", "wall_time_s", "nodes", "proposals"]


def write_bench_csv(rows, summary, out_path):
    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    summary_path = os.path.splitext(out_path)[0] + ".summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["config", "solved", "time_on_solved_s"]
        )
        writer.writeheader()
        writer.writerows(summary)
    return summary_path


SWEEP_METRICS = [
    "sat_solved",
    "unsat_solved",
    "avg_time_common_unsat_s",
    "avg_states_common_unsat",
]


def run_sweep_t(directory, t_values, args):
    """Rejection-threshold sweep with a fixed topological branching order.

    Emits one column per T: instances solved split by verdict, then
    average time and average search states over the UNSAT instances
    solved at every T.
    """
    per_t_rows = {}
    for T in t_values:
        cfg = _bench_config(args, "mcmc", "static", T)
        rows, _ = run_bench(directory, [(f"T{T}", cfg)], args)
        per_t_rows[T] = {r["instance"]: r for r in rows}
    common_unsat = None
    for T in t_values:
        mine = {k for k, r in per_t_rows[T].items() if r["verdict"] == "unsat"}
        common_unsat = mine if common_unsat is None else (common_unsat & mine)
    table = {}
    for T in t_values:
        rows = per_t_rows[T]
        sat = sum(1 for r in rows.values() if r["verdict"] == "sat")
        unsat = sum(1 for r in rows.values() if r["verdict"] == "unsat")
        if common_unsat:
            avg_time = float(
                np.mean([rows[k]["wall_time_s"] for k in sorted(common_unsat)])
            )
            avg_states = float(
                np.mean([rows[k]["nodes"] for k in sorted(common_unsat)])
            )
        else:
            avg_time = avg_states = float("nan")
        table[T] = {
            "sat_solved": sat,
            "unsat_solved": unsat,
            "avg_time_common_unsat_s": round(avg_time, 6),
            "avg_states_common_unsat": round(avg_states, 3),
        }
    return table


def write_sweep_csv(table, out_path):
    t_values = sorted(table)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric"] + [f"T={t}" for t in t_values])
        for metric in SWEEP_METRICS:
            writer.writerow([metric] + [table[t][metric] for t in t_values])


def cmd_bench(args) -> int:
    try:
        if args.sweep_T:
            t_values = [int(t) for t in args.sweep_T.split(",")]
            table = run_sweep_t(args.dir, t_values, args)
            write_sweep_csv(table, args.out)
            print(f"wrote T-sweep table to {args.out}")
            return 0
        configs = []
        for token in args.configs.split(","):
            strategy, heuristic, T = _parse_config_token(token.strip())
            configs.append((token.strip(), _bench_config(args, strategy, heuristic, T)))
        rows, summary = run_bench(args.dir, configs, args)
        summary_path = write_bench_csv(rows, summary, args.out)
    except (ValueError, OSError, ParseError, QueryFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for entry in summary:
        print(
            f"{entry['config']}: solved {entry['solved']} "
            f"in {entry['time_on_solved_s']:.3f}s"
        )
    print(f"wrote {args.out} and {summary_path}")
    return 0


# ---------------------------------------------------------------------------
# gen / report
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    eps_choices = tuple(float(e) for e in args.eps.split(","))
    instances = gen.generate_suite(
        args.seed if args.seed is not None else 0,
        args.count,
        eps_choices=eps_choices,
        runner_up_target=args.sat_bias,
    )
    gen.write_suite(args.out, instances)
    print(f"wrote {len(instances)} instances to {args.out}")
    return 0


def cmd_report(args) -> int:
    from .report import render_report  # defers the matplotlib import

    try:
        written = render_report(args.csv, args.out)
    except (OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_engine_flags(p: argparse.ArgumentParser):
    p.add_argument("--strategy", choices=["mcmc", "walksat", "lponly"], default="mcmc")
    p.add_argument("--heuristic", choices=["pi", "static"], default="pi")
    p.add_argument("-T", type=int, default=2, help="rejection threshold")
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--timeout", type=float, default=None, help="seconds")
    p.add_argument("--static-depth", dest="static_depth", type=int, default=3)
    p.add_argument("--node-limit", dest="node_limit", type=int, default=None)
    p.add_argument(
        "--visited-tracking-max", dest="visited_tracking_max", type=int, default=20
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soiverify",
        description="Complete ReLU network verifier driven by "
        "sum-of-infeasibilities search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="decide one (network, query) instance")
    p.add_argument("--network", required=True, help=".nnet or .json network file")
    p.add_argument("--query", required=True, help="query JSON file")
    _add_engine_flags(p)
    p.add_argument("--portfolio", type=int, default=None, metavar="N")
    p.add_argument("--trace", default=None, metavar="PATH", help="write node trace JSONL")
    p.add_argument("--dump-lp", dest="dump_lp", default=None, metavar="PATH")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser(
        "tighten-bound", help="shrink a perturbation bound by 2% steps"
    )
    p.add_argument("--network", required=True)
    p.add_argument("--x0", required=True, type=float, nargs="+")
    p.add_argument("--true-label", dest="true_label", required=True, type=int)
    p.add_argument("--target-label", dest="target_label", required=True, type=int)
    p.add_argument("--eps0", required=True, type=float,
                   help="initial upper bound, e.g. from an attack tool")
    p.add_argument("--step", type=float, default=0.02)
    p.add_argument(
        "--per-query-timeout", dest="per_query_timeout", type=float, default=1800.0
    )
    p.add_argument("--max-iterations", dest="max_iterations", type=int, default=500)
    p.add_argument("--domain", type=float, nargs=2, default=(0.0, 1.0))
    _add_engine_flags(p)
    p.set_defaults(func=cmd_tighten_bound)

    p = sub.add_parser("bench", help="run a directory of instances to CSV")
    p.add_argument("--dir", required=True)
    p.add_argument("--configs", default="mcmc+pi",
                   help="comma list like mcmc+pi,lponly+static,mcmc+pi+T4")
    p.add_argument("--out", default="bench.csv")
    p.add_argument("--sweep-T", dest="sweep_T", default=None,
                   help="comma list of T values; emits the sweep table instead")
    _add_engine_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="generate a random instance suite")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eps", default="0.05,0.1,0.3")
    p.add_argument("--sat-bias", dest="sat_bias", action="store_true",
                   help="larger eps and runner-up targets")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("report", help="render figures from bench CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", default=None, help="output directory (default: beside CSV)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
