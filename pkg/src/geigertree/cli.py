"""Command line interface: simulate, limits, moments, verify.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import limits, moments, verify
from .experiment import ConfigError, ExperimentConfig, run_experiment, _json_default
from .offspring import LawError, build_law, extinction_probs

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# flag name -> ExperimentConfig field
_OVERRIDES = {"law": "law", "param": "params", "n": "n", "t": "t", "reps": "replicates",
              "seed": "master_seed", "max_k": "max_k", "mode": "mode",
              "out_csv": "out_csv", "out_json": "out_json", "jobs": "jobs"}

LIMIT_KINDS = ("sum", "left", "right", "split-left", "split-right", "joint",
               "mrca", "nested", "g", "l-tail")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--law", choices=("binary", "geometric", "poisson", "custom"))
    p.add_argument("--param", type=float, action="append",
                   help="law parameter; repeat for each pmf entry of a custom law")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-k", dest="max_k", type=int)
    p.add_argument("--mode", choices=("counts-only", "full-tree-oracle"))
    p.add_argument("--out-csv", dest="out_csv")
    p.add_argument("--out-json", dest="out_json")
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geigertree", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="sample decompositions and reduced-tree statistics")
    _add_config_flags(sim)

    lim = sub.add_parser("limits", help="evaluate a closed-form limit CDF as CSV")
    lim.add_argument("kind", choices=LIMIT_KINDS)
    lim.add_argument("--t", type=float, default=0.5)
    lim.add_argument("--sigma2", type=float, default=1.0)
    lim.add_argument("--k", type=int, default=1)
    lim.add_argument("--k-right", dest="k_right", type=int, default=1)
    lim.add_argument("--x", type=float, nargs="+", help="evaluation points")
    lim.add_argument("--y", type=float, default=None, help="second coordinate for joint")
    lim.add_argument("--grid", type=int, default=None, help="evenly spaced points on the domain")
    lim.add_argument("--out-csv", dest="out_csv")

    mom = sub.add_parser("moments", help="exact finite-n moments as JSON")
    mom.add_argument("--law", default="geometric",
                     choices=("binary", "geometric", "poisson", "custom"))
    mom.add_argument("--param", type=float, action="append")
    mom.add_argument("--n", type=int, default=1000)
    mom.add_argument("--t", type=float, default=0.5)
    mom.add_argument("--out-json", dest="out_json")

    ver = sub.add_parser("verify", help="run acceptance criteria A1-A12")
    ver.add_argument("--budget", choices=tuple(verify.BUDGETS), default="standard")
    ver.add_argument("--seed", type=int, default=None)
    ver.add_argument("--only", nargs="+", help="criteria to run, e.g. A1 A9")
    ver.add_argument("--out-json", dest="out_json")
    ver.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    return parser


def config_from_args(args) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    for flag, name in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[name] = value
    cfg = ExperimentConfig.from_dict(data)
    cfg.validate()
    return cfg


def _limit_domain(kind, t):
    # split-time laws live on [0, t]; everything else is plotted on [0, 1]
    if kind in ("split-left", "split-right", "joint", "mrca"):
        return 0.0, t
    return 0.0, 1.0


def _evaluate_limit(args, x):
    t, s2 = args.t, args.sigma2
    kind = args.kind
    if kind == "sum":
        return limits.limit_sum_cdf(limits.LimitSpec(t, s2), x)
    if kind == "left":
        return limits.LimitSpec(t, s2).left_cdf(x)
    if kind == "right":
        return limits.LimitSpec(t, s2).right_cdf(x)
    if kind == "split-left":
        return limits.split_limit_cdf("left", args.k, t, x)
    if kind == "split-right":
        return limits.split_limit_cdf("right", args.k, t, x)
    if kind == "joint":
        y = x if args.y is None else args.y
        return limits.joint_split_limit_cdf(args.k, args.k_right, t, x, y)
    if kind == "mrca":
        return limits.mrca_limit_cdf(t, x)
    if kind == "nested":
        return limits.nested_uniform_cdf(args.k, x)
    if kind == "g":
        return limits.g_transform(t, x)
    return limits.l_limit_tail(t, s2, x)


def cmd_limits(args) -> int:
    if args.x:
        xs = np.array(args.x)
    else:
        lo, hi = _limit_domain(args.kind, args.t)
        xs = np.linspace(lo, hi, args.grid or 21)
    values = [float(_evaluate_limit(args, float(x))) for x in xs]
    out = open(args.out_csv, "w", newline="") if args.out_csv else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["x", args.kind])
        for x, v in zip(xs, values):
            writer.writerow([repr(float(x)), repr(v)])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_moments(args) -> int:
    law = build_law(args.law, args.param or [])
    cache = extinction_probs(law, args.n)
    rep = moments.moment_report(cache, args.n, args.t)
    text = json.dumps(rep.to_dict(), indent=2, default=_json_default)
    if args.out_json:
        with open(args.out_json, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def _all_pass(tests) -> bool:
    if not isinstance(tests, dict):
        return True
    return all(entry.get("pass", True) for entry in tests.values())


def cmd_simulate(args) -> int:
    cfg = config_from_args(args)
    table = run_experiment(cfg)
    print(json.dumps(table.summary, indent=2, default=_json_default))
    return EXIT_OK if _all_pass(table.summary["tests"]) else EXIT_FAIL


def cmd_verify(args) -> int:
    suite = verify.Suite(args.budget, args.seed, args.jobs)
    wanted = [c.upper() for c in args.only] if args.only else [f"A{k}" for k in range(1, 13)]
    results = []
    for name in wanted:
        method = getattr(suite, name.lower(), None)
        if method is None or not name[1:].isdigit():
            raise ConfigError(f"unknown criterion {name!r}")
        result = method()
        print(result.line(), flush=True)
        results.append(result)
    rep = verify.report(results)
    if args.out_json:
        with open(args.out_json, "w") as fh:
            json.dump(rep, fh, indent=2, default=_json_default)
            fh.write("\n")
    return EXIT_OK if rep["passed"] else EXIT_FAIL


COMMANDS = {"simulate": cmd_simulate, "limits": cmd_limits,
            "moments": cmd_moments, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, LawError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
