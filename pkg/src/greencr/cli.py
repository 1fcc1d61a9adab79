"""Command-line front end: ``greencr {generate,allocate,solve,validate,experiment}``.

Exit codes: 0 success, 1 usage or input error, 2 infeasible or not converged
(the report is still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .allocation import allocate_baseline, allocate_efm, initial_thetas, satisfied_rt_count, user_rates
from .errors import ConfigError, DomainError, OracleSizeError, UsageError
from .experiments import EXPERIMENT_MAX_ITER, EXPERIMENTS, default_config, run_experiment, write_results
from .model import evaluate_constraints
from .oracle import constrained_grid_solve, grid_theta_optimum
from .scenario import (ScenarioConfig, apply_overrides, generate_scenario, parse_config_text,
                       read_scenario, write_scenario)
from .structopt import SolverConfig, dual_subgradient_solve, per_su_theta_optimize, solve_closed_form

OUTPUT_DIR_ENV = "GREENCR_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_UNSOLVED = 0, 1, 2
VALIDATE_TOLERANCE = 1e-4

log = logging.getLogger("greencr")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _num(x):
    """12 significant digits; NaN and infinities become None in JSON."""
    x = float(x)
    return float("%.12g" % x) if math.isfinite(x) else None


def _fmt(x):
    return "%.12g" % float(x)


def _fmt_list(values):
    return "[" + ", ".join(_fmt(v) for v in values) + "]"


def output_path(path):
    """Relative output paths are placed under ``$GREENCR_OUTPUT_DIR`` when it is set."""
    path = Path(path)
    root = os.environ.get(OUTPUT_DIR_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def load_config(args, base=None):
    base = base if base is not None else ScenarioConfig()
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
        base = parse_config_text(text, base)
    if args.overrides:
        base = apply_overrides(base, args.overrides)
    base.validate()
    return base


def load_scenario(args):
    if getattr(args, "scenario", None):
        return read_scenario(args.scenario)
    return generate_scenario(load_config(args))


def solver_config(args):
    return SolverConfig(tol_dual=args.tol_dual, tol_primal=args.tol_primal, max_iter=args.max_iter)


def _allocate(scenario, scheme):
    theta = initial_thetas(scenario)
    alloc = allocate_efm(scenario, theta) if scheme == "efm" else allocate_baseline(scenario, theta)
    return alloc, theta


def _write_json(payload, path):
    path = output_path(path)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    log.info("wrote %s", path)


# --------------------------------------------------------------------------
# subcommands


def cmd_generate(args):
    config = load_config(args)
    scenario = generate_scenario(config)
    path = output_path(args.output or "scenario.json")
    write_scenario(scenario, path)
    print(f"wrote {path}: {scenario.num_users} users, {len(scenario.pus)} PUs, "
          f"{len(scenario.available)} available sub-channels, config hash {config.config_hash()}")
    return EXIT_OK


def cmd_allocate(args):
    scenario = load_scenario(args)
    alloc, theta = _allocate(scenario, args.scheme)
    rates = user_rates(scenario, alloc, theta)
    satisfied = satisfied_rt_count(scenario, alloc, theta)
    num_rt = sum(su.is_rt for su in scenario.users)
    for i, su in enumerate(scenario.users):
        print(f"user {i} ({su.traffic.value}): D = {list(alloc[i])} "
              f"rate {_fmt(rates[i])} required {_fmt(su.rate_requirement)}")
    print(f"satisfied RT users: {satisfied} of {num_rt}")
    if args.output:
        _write_json({"scheme": args.scheme, "sets": [list(s) for s in alloc.sets],
                     "rates": [_num(r) for r in rates], "theta_init": [_num(t) for t in theta],
                     "satisfied_rt": satisfied, "num_rt": num_rt}, args.output)
    return EXIT_OK


def _report_payload(scenario, alloc, report):
    slacks = evaluate_constraints(scenario, alloc, report.theta)
    return {
        "method": report.method,
        "theta": [_num(t) for t in report.theta],
        "objective": _num(report.objective),
        "feasible": bool(report.feasible),
        "converged": bool(report.converged),
        "fallback": bool(report.fallback),
        "iterations": int(report.iterations),
        "max_constraint_violation": _num(report.max_constraint_violation),
        "message": report.message,
        "slacks": {name: [_num(v) for v in getattr(slacks, name)]
                   for name in ("energy", "time", "interference", "rate", "bounds")},
    }


def cmd_solve(args):
    scenario = load_scenario(args)
    alloc, _ = _allocate(scenario, args.scheme)
    config = solver_config(args)
    methods = ("closed", "dual") if args.method == "both" else (args.method,)
    reports = {}
    for m in methods:
        fn = solve_closed_form if m == "closed" else dual_subgradient_solve
        reports[m] = fn(scenario, alloc, config)
    payload = {"sets": [list(s) for s in alloc.sets]}
    ok = True
    for m, rep in reports.items():
        body = _report_payload(scenario, alloc, rep)
        payload[m] = body
        ok = ok and rep.feasible and rep.converged
        print(f"{m}: objective {_fmt(rep.objective)} feasible {rep.feasible} "
              f"converged {rep.converged} iterations {rep.iterations}"
              + (" (dual fallback)" if rep.fallback else ""))
        print(f"  theta {_fmt_list(rep.theta)}")
        print(f"  max violation {_fmt(rep.max_constraint_violation)}; "
              f"interference slack {_fmt_list(body['slacks']['interference'])}")
        if rep.message:
            print(f"  {rep.message}")
    if len(reports) == 2:
        a, b = reports["closed"], reports["dual"]
        users = list(alloc.allocated_users)
        dtheta = float(np.max(np.abs(a.theta[users] - b.theta[users]), initial=0.0))
        dobj = abs(a.objective - b.objective) / max(abs(b.objective), 1e-300)
        payload["agreement"] = {"max_theta_difference": _num(dtheta),
                                "relative_objective_difference": _num(dobj)}
        print(f"agreement: max |theta difference| {_fmt(dtheta)}, "
              f"relative objective difference {_fmt(dobj)}")
    if args.output:
        _write_json(payload, args.output)
    return EXIT_OK if ok else EXIT_UNSOLVED


def cmd_validate(args):
    scenario = load_scenario(args)
    params = scenario.params
    alloc, _ = _allocate(scenario, args.scheme)
    users = list(alloc.allocated_users)

    # per user: first-order solver against a brute-force grid, no constraints
    per_user = 0.0
    for i in users:
        su = scenario.users[i]
        fast = per_su_theta_optimize(su, alloc[i], params)
        slow = grid_theta_optimum(su, alloc[i], params)
        per_user = max(per_user, abs(fast - slow) / abs(slow))
    print(f"per-user optimiser vs grid: max relative deviation {_fmt(per_user)} "
          f"over {len(users)} users")

    payload = {"users": len(users), "per_user_max_relative_deviation": _num(per_user)}
    code = EXIT_OK
    rep = solve_closed_form(scenario, alloc, solver_config(args))
    try:
        ref = constrained_grid_solve(scenario, alloc)
    except OracleSizeError as exc:
        print(f"closed form vs constrained grid: skipped ({exc})")
        ref = None
        code = EXIT_UNSOLVED
    if ref is not None and not (ref.feasible and rep.feasible):
        print("closed form vs constrained grid: no feasible point")
        code = EXIT_UNSOLVED
    elif ref is not None:
        dev = max((abs(rep.theta[i] - ref.theta[i]) / abs(ref.theta[i]) for i in users), default=0.0)
        obj = abs(rep.objective - ref.objective) / max(abs(ref.objective), 1e-300)
        within = dev <= VALIDATE_TOLERANCE
        print(f"closed form vs constrained grid: max relative deviation {_fmt(dev)} "
              f"(tolerance {_fmt(VALIDATE_TOLERANCE)}, {'ok' if within else 'exceeded'}); "
              f"relative objective difference {_fmt(obj)}")
        payload.update(max_relative_deviation=_num(dev), relative_objective_difference=_num(obj),
                       within_tolerance=within)
        if not within:
            code = EXIT_UNSOLVED
    if args.output:
        _write_json(payload, args.output)
    return code


def cmd_experiment(args):
    if args.name not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {args.name!r}; choose from "
                         f"{', '.join(sorted(EXPERIMENTS))}")
    config = load_config(args, base=default_config(args.name))
    solver = SolverConfig(tol_dual=args.tol_dual, tol_primal=args.tol_primal,
                          max_iter=args.max_iter if args.max_iter_set else EXPERIMENT_MAX_ITER)
    result = run_experiment(args.name, config, method=args.method, solver=solver, jobs=args.jobs)
    path = output_path(args.output or f"{args.name}.csv")
    write_results(result, path)
    print(f"wrote {path}: {len(result.rows)} rows, config hash {result.config_hash}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="key = value config file")
    common.add_argument("-o", "--output", help="output file (relative paths go under "
                        f"${OUTPUT_DIR_ENV} when set)")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="config override, applied after the file")
    common.add_argument("-v", "--verbose", action="count", default=0)

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("-s", "--scenario", help="scenario JSON from 'generate' "
                      "(default: draw one from the config)")
    scen.add_argument("--scheme", choices=("efm", "baseline"), default="efm",
                      help="sub-channel allocation scheme")

    def solver_options(max_iter):
        opts = argparse.ArgumentParser(add_help=False)
        defaults = SolverConfig()
        opts.add_argument("--max-iter", type=int, default=None,
                          help=f"dual iteration cap (default {max_iter})")
        opts.add_argument("--tol-dual", type=float, default=defaults.tol_dual)
        opts.add_argument("--tol-primal", type=float, default=defaults.tol_primal)
        return opts

    solver = solver_options(SolverConfig().max_iter)

    parser = _Parser(prog="greencr", description="Energy-harvesting cognitive radio: "
                     "sub-channel allocation and harvesting-ratio optimisation.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("generate", parents=[common], help="draw a scenario and write it as JSON")
    sub.add_parser("allocate", parents=[common, scen], help="allocate sub-channels")
    p = sub.add_parser("solve", parents=[common, scen, solver], help="optimise harvesting ratios")
    p.add_argument("--method", choices=("closed", "dual", "both"), default="closed")
    sub.add_parser("validate", parents=[common, scen, solver],
                   help="compare the optimisers against the grid oracle")
    p = sub.add_parser("experiment", parents=[common, solver_options(EXPERIMENT_MAX_ITER)],
                       help="run a parameter sweep to CSV")
    p.add_argument("name", help="one of: " + ", ".join(EXPERIMENTS))
    p.add_argument("--method", choices=("closed", "dual"), default="closed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    return parser


COMMANDS = {"generate": cmd_generate, "allocate": cmd_allocate, "solve": cmd_solve,
            "validate": cmd_validate, "experiment": cmd_experiment}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    if hasattr(args, "max_iter"):
        args.max_iter_set = args.max_iter is not None
        if args.max_iter is None:
            args.max_iter = SolverConfig().max_iter
        if args.max_iter < 1:
            parser.error("--max-iter must be >= 1")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, DomainError) as exc:
        print(f"greencr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
