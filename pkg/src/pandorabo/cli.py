"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 tolerance failure.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

from . import bench
from .config import POLICIES, ConfigError, load_config
from .verify import budget_suite, optimality_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TOLERANCE = 3


def _seeds(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N[,M,...], got {text!r}") from None
    if not seeds or len(set(seeds)) != len(seeds) or min(seeds) < 0:
        raise argparse.ArgumentTypeError("seeds must be distinct nonnegative integers")
    return seeds


def _policies(text):
    names = [p.strip() for p in text.split(",") if p.strip()]
    for p in names:
        if p not in POLICIES:
            raise argparse.ArgumentTypeError(f"unknown policy {p!r}; expected one of {POLICIES}")
    return names


def _load(path, seeds=None, policy=None):
    if not os.path.exists(path):
        raise ConfigError("<file>", f"config file {path!r} does not exist")
    config = load_config(path)
    if seeds is not None:
        config = config.with_seeds(seeds)
    if policy is not None:
        config = config.with_policy(policy)
        if policy == "pbgi-u" and config.cost.type != "unknown":
            raise ConfigError("cost.type", "policy pbgi-u needs cost type 'unknown'")
    return config


def _run_one(config, out, jobs):
    results = bench.run_experiment(config, jobs=jobs)
    path = bench.write_results(config, results, out)
    n = sum(len(r[0]) for r in results.values())
    print(f"{bench.run_name(config)}: {len(results)} seeds, {n} records -> {path}")
    return path


def cmd_run(args):
    if args.policy is not None and len(args.policy) != 1:
        raise ConfigError("--policy", "run takes a single policy; use sweep for several")
    config = _load(args.config[0], args.seeds, args.policy[0] if args.policy else None)
    _run_one(config, args.out, args.jobs)
    return EXIT_OK


def cmd_sweep(args):
    by_objective = {}
    for path in args.config:
        base = _load(path, args.seeds)
        for name in args.policy or [base.policy.name]:
            config = _load(path, args.seeds, name)
            by_objective.setdefault(config.objective, {})[name] = _run_one(config, args.out, args.jobs)
    for objective, paths in by_objective.items():
        rows = bench.summarize(paths)
        out = bench.write_summary(rows, os.path.join(args.out, f"summary__{objective}.csv"))
        print(f"summary -> {out}")
    return EXIT_OK


def _discover(directory):
    found = {}
    for path in sorted(glob.glob(os.path.join(directory, "*__*.csv"))):
        name = os.path.basename(path)
        if name.endswith(".points.csv") or name.startswith("summary__"):
            continue
        policy, objective = name[: -len(".csv")].split("__", 1)
        found.setdefault(objective, {})[policy] = path
    return found


def cmd_summarize(args):
    found = _discover(args.out)
    if not found:
        raise ConfigError("--out", f"no result CSVs in {args.out!r}")
    for objective, paths in found.items():
        if args.policy:
            paths = {p: v for p, v in paths.items() if p in args.policy}
        rows = bench.summarize(paths, n_grid=args.grid)
        out = bench.write_summary(rows, os.path.join(args.out, f"summary__{objective}.csv"))
        print(f"{objective}: {len(paths)} policies -> {out}")
    return EXIT_OK


def cmd_pandora_verify(args):
    opt = optimality_suite(args.instances, args.seed, inject_fault=args.inject_fault)
    for r in opt.residuals:
        if args.verbose or not r.ok:
            print(f"instance {r.instance:4d} {r.check:22s} residual {r.residual:.3e} {'ok' if r.ok else 'FAIL'}")
    print(f"optimality: {args.instances} instances, max value residual "
          f"{max(opt.max_residual('value[stop-early]'), opt.max_residual('value[open-on-tie]')):.3e}, "
          f"max tie spend residual {max(opt.max_residual('spend[stop-early]'), opt.max_residual('spend[open-on-tie]')):.3e}, "
          f"{'PASS' if opt.passed else 'FAIL'}")
    ok = opt.passed
    if args.budget_instances:
        bud = budget_suite(args.budget_instances, args.seed)
        for r in bud.residuals:
            if args.verbose or not r.ok:
                print(f"instance {r.instance:4d} {r.check:22s} residual {r.residual:.3e} {'ok' if r.ok else 'FAIL'}")
        print(f"budget: {args.budget_instances} instances, max spend residual {bud.max_residual('spend'):.3e}, "
              f"max value residual {bud.max_residual('value'):.3e}, {'PASS' if bud.passed else 'FAIL'}")
        ok = ok and bud.passed
    return EXIT_OK if ok else EXIT_TOLERANCE


def build_parser():
    parser = argparse.ArgumentParser(prog="pandorabo", description="Cost-aware Bayesian optimization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", action="append", required=True, metavar="PATH",
                           help="experiment config (.yaml/.yml/.json); sweep accepts several")
        p.add_argument("--out", default="results", metavar="DIR", help="output directory")
        p.add_argument("--seeds", type=_seeds, metavar="N[,M,...]", help="override the config seeds")
        p.add_argument("--jobs", type=int, default=1, metavar="K", help="seeds run in parallel")
        p.add_argument("--policy", type=_policies, metavar="NAME[,NAME,...]", help="override the policy")

    common(sub.add_parser("run", help="run one experiment config"))
    common(sub.add_parser("sweep", help="run configs for several policies and summarize"))
    s = sub.add_parser("summarize", help="median and quartile regret on a cumulative-cost grid")
    s.add_argument("--out", default="results", metavar="DIR", help="directory holding result CSVs")
    s.add_argument("--policy", type=_policies, metavar="NAME[,NAME,...]", help="restrict to these policies")
    s.add_argument("--grid", type=int, default=101, help="number of cost-grid points")

    v = sub.add_parser("pandora-verify", help="check the index policy against the exact oracle")
    v.add_argument("--instances", type=int, default=200)
    v.add_argument("--budget-instances", type=int, default=50)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject-fault", action="store_true",
                   help="negative control: the oracle breaks ties the wrong way")
    v.add_argument("--verbose", action="store_true", help="print every residual")
    return parser


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "summarize": cmd_summarize, "pandora-verify": cmd_pandora_verify}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, bench.AlignmentError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
