"""Seeded parameter sweeps, each written as a CSV table.

Every experiment follows the same pipeline per sweep point: draw a scenario,
allocate sub-channels, optimise the harvesting ratios and measure.  A sweep
point is an independent job, so ``jobs > 1`` farms points out to worker
processes; rows are always assembled in sweep order, which keeps the CSV
byte-identical whatever the job count.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocation import allocate_baseline, allocate_efm, initial_thetas, satisfied_rt_count
from .errors import UsageError
from .model import Allocation, effective_gain
from .oracle import constrained_grid_solve
from .scenario import ScenarioConfig, generate_scenario
from .structopt import (SolverConfig, closed_form_theta, dual_subgradient_solve,
                        solve_closed_form)

# dual iterations per sweep point; binding interference limits rarely meet
# the multiplier tolerance, and the best feasible iterate settles long before
EXPERIMENT_MAX_ITER = 3000

PROVENANCE = ("experiment", "seed", "config_hash", "method")


@dataclass(frozen=True)
class ExperimentResult:
    """Tabulated sweep output; every row also carries the provenance columns."""

    experiment: str
    columns: tuple
    rows: tuple
    seed: int
    config_hash: str
    method: str
    notes: dict = field(default_factory=dict)

    def column(self, name):
        k = self.columns.index(name)
        return [row[k] for row in self.rows]

    def records(self):
        return [dict(zip(self.columns, row)) for row in self.rows]


# --------------------------------------------------------------------------
# shared pipeline pieces


def optimise(scenario, allocation, method, solver):
    if method == "dual":
        return dual_subgradient_solve(scenario, allocation, solver)
    return solve_closed_form(scenario, allocation, solver)


def fixed_blocks(num_users, per_user):
    """User ``i`` gets sub-channels ``i*f .. i*f + f - 1``."""
    return Allocation(tuple(tuple(range(i * per_user, (i + 1) * per_user))
                            for i in range(num_users)))


def _mean_gain_theta(su, subchannels, params):
    H = float(np.mean(np.asarray(effective_gain(su, params))[list(subchannels)]))
    if H * su.harvest_rate <= 1.0:
        return math.nan
    return closed_form_theta(su, H, params)


# --------------------------------------------------------------------------
# experiments: each has defaults, a list of sweep points and a point evaluator


class _Experiment:
    name = ""
    columns = ()

    def default_config(self):
        raise NotImplementedError

    def points(self, config):
        raise NotImplementedError

    def evaluate(self, config, point, method, solver):
        raise NotImplementedError


class OneSuSurface(_Experiment):
    """Optimal ratio and rate of one user on one sub-channel over a
    (harvesting rate, sensing time) grid; no primary users."""

    name = "one-su-surface"
    columns = ("harvest_rate", "sensing_time", "theta", "rate")
    harvest_rates = tuple(float(c) for c in range(2, 11))
    sensing_times = (5e-6, 10e-6, 20e-6, 50e-6, 100e-6)

    def default_config(self):
        return ScenarioConfig(num_users=1, num_rt=0, num_pus=0, num_subchannels=1,
                              num_available=1, distance_min=100.0, distance_max=100.0,
                              fading="none", sensing_energy=(1e-3,))

    def points(self, config):
        return [{"harvest_rate": c, "sensing_time": t}
                for c in self.harvest_rates for t in self.sensing_times]

    def evaluate(self, config, point, method, solver):
        cfg = config.with_overrides(harvest_rate=(point["harvest_rate"],),
                                    sensing_time=(point["sensing_time"],))
        sc = generate_scenario(cfg)
        alloc = Allocation(((0,),))
        rep = optimise(sc, alloc, method, solver)
        return [(point["harvest_rate"], point["sensing_time"], float(rep.theta[0]),
                 rep.objective)]


class SumRateVsSubchannels(_Experiment):
    """Four users, two or three of them RT, over a growing available set.

    Harvesting rates 3, 4, 6 and 12 J/s; requirement pairs (12, 6) and
    (14, 8) for (RT, NRT).  Every user sits 100 m away with Rayleigh fading
    per sub-channel; with the full 50-200 m range the d^-6 power law makes
    these requirements unreachable for most draws.
    """

    name = "sumrate-vs-subchannels"
    columns = ("case", "num_rt", "rate_requirement", "nrt_rate_requirement",
               "num_available", "sum_rate", "satisfied_rt", "feasible", "fallback")
    cases = ((2, 12.0, 6.0), (2, 14.0, 8.0), (3, 12.0, 6.0), (3, 14.0, 8.0))

    def default_config(self):
        return ScenarioConfig(num_users=4, num_rt=2, num_subchannels=32, num_available=32,
                              num_pus=8, harvest_rate=(3.0, 4.0, 6.0, 12.0),
                              distance_min=100.0, distance_max=100.0)

    def points(self, config):
        ms = list(range(4, config.num_subchannels + 1, 4)) or [config.num_subchannels]
        return [{"case": c, "num_available": m} for c in range(len(self.cases)) for m in ms]

    def evaluate(self, config, point, method, solver):
        num_rt, req, nrt_req = self.cases[point["case"]]
        cfg = config.with_overrides(num_rt=num_rt, rate_requirement=(req,),
                                    nrt_rate_requirement=(nrt_req,),
                                    num_available=point["num_available"])
        sc = generate_scenario(cfg)
        alloc = allocate_efm(sc)
        rep = optimise(sc, alloc, method, solver)
        return [(point["case"], num_rt, req, nrt_req, point["num_available"], rep.objective,
                 satisfied_rt_count(sc, alloc, rep.theta), int(rep.feasible),
                 int(rep.fallback))]


class EfmVsBaseline(_Experiment):
    """RT users meeting their requirement, EFM priority against the plain
    greedy max-rate rule, as the available set grows.

    Users differ in harvesting rate and sensing energy (the eight-user
    table's values) but share one flat channel at 113 m, where the
    effective gain is about 1.37.
    """

    name = "efm-vs-baseline"
    columns = ("num_available", "satisfied_efm", "satisfied_baseline")
    alphas = (3060.0, 5850.0, 7230.0, 10130.0, 12500.0, 15560.0, 19050.0, 31000.0)
    chis = (20.0, 20.0, 30.0, 40.0, 60.0, 85.0, 120.0, 160.0)

    def default_config(self):
        return ScenarioConfig(num_users=8, num_rt=8, num_pus=8, num_subchannels=48,
                              num_available=48, harvest_rate=self.chis,
                              sensing_energy=tuple(c / a for c, a in zip(self.chis, self.alphas)),
                              rate_requirement=(10.0,), fading="none",
                              distance_min=113.0, distance_max=113.0)

    def points(self, config):
        step = max(1, config.num_subchannels // 12)
        return [{"num_available": m} for m in range(step, config.num_subchannels + 1, step)]

    def evaluate(self, config, point, method, solver):
        sc = generate_scenario(config.with_overrides(num_available=point["num_available"]))
        theta = initial_thetas(sc)
        efm = satisfied_rt_count(sc, allocate_efm(sc, theta), theta)
        base = satisfied_rt_count(sc, allocate_baseline(sc, theta), theta)
        return [(point["num_available"], efm, base)]


# PUs far enough that the interference limit stays slack at 5e-13 W, so the
# per-user grid oracle is exact for any number of users
_DISTANT_PUS = {"pu_distance_min": 300.0, "pu_distance_max": 400.0}


class ClosedFormVsOptimal(_Experiment):
    """Twenty users with ``f`` sub-channels each: per-user ratio from the
    closed-form pipeline against the constrained grid optimum.

    ``theta_mean_gain`` is the single-gain formula evaluated at the user's
    mean effective gain, reported alongside for comparison. It is NaN where
    that mean gain times the harvest rate is at most one and the formula has
    no solution.
    """

    name = "closedform-vs-optimal"
    columns = ("per_user", "user", "theta_closed", "theta_oracle", "ratio",
               "theta_mean_gain", "mean_gain_ratio")
    per_user_counts = (2, 6)

    def default_config(self):
        return ScenarioConfig(num_users=20, num_rt=0, harvest_rate=(5.0,),
                              interference_threshold=5e-13, **_DISTANT_PUS)

    def points(self, config):
        return [{"per_user": f} for f in self.per_user_counts]

    def evaluate(self, config, point, method, solver):
        f = point["per_user"]
        K = config.num_users
        n = K * f
        cfg = config.with_overrides(num_subchannels=n, num_available=n,
                                    num_pus=max(1, n // 4))
        sc = generate_scenario(cfg)
        alloc = fixed_blocks(K, f)
        rep = optimise(sc, alloc, method, solver)
        ref = constrained_grid_solve(sc, alloc)
        rows = []
        for i in range(K):
            tc, to = float(rep.theta[i]), float(ref.theta[i])
            tm = _mean_gain_theta(sc.users[i], alloc[i], sc.params)
            rows.append((f, i, tc, to, tc / to, tm, tm / to))
        return rows


class SumRateVsUsers(_Experiment):
    """Sum rate against the number of users, each holding ``f`` sub-channels:
    closed-form pipeline against the constrained grid optimum."""

    name = "sumrate-vs-users"
    columns = ("per_user", "num_users", "sum_rate", "sum_rate_oracle", "relative_gap")
    user_counts = (4, 6, 8, 10)
    per_user_counts = (2, 6)

    def default_config(self):
        return ScenarioConfig(num_users=10, num_rt=0, harvest_rate=(5.0,),
                              interference_threshold=5e-13, **_DISTANT_PUS)

    def points(self, config):
        return [{"per_user": f, "num_users": k}
                for f in self.per_user_counts for k in self.user_counts]

    def evaluate(self, config, point, method, solver):
        f, K = point["per_user"], point["num_users"]
        n = K * f
        cfg = config.with_overrides(num_users=K, num_rt=min(config.num_rt, K),
                                    num_subchannels=n, num_available=n,
                                    num_pus=max(1, n // 4))
        sc = generate_scenario(cfg)
        alloc = fixed_blocks(K, f)
        rep = optimise(sc, alloc, method, solver)
        ref = constrained_grid_solve(sc, alloc)
        gap = (ref.objective - rep.objective) / ref.objective
        return [(f, K, rep.objective, ref.objective, gap)]


class SumRateVsRateConstraint(_Experiment):
    """Four RT users on 16 sub-channels with a rising common requirement.

    ``sum_rate`` is the optimiser's objective whatever happened;
    ``compliant_sum_rate`` counts it only when the ratios are feasible and
    every RT user (with or without sub-channels) meets its requirement, and
    is 0 otherwise.
    """

    name = "sumrate-vs-rate-constraint"
    columns = ("rate_requirement", "sum_rate", "compliant_sum_rate", "satisfied_rt",
               "feasible", "fallback")
    requirements = tuple(float(r) for r in range(1, 12))

    def default_config(self):
        return ScenarioConfig(num_users=4, num_rt=4, num_subchannels=16, num_available=16,
                              harvest_rate=(5.0,))

    def points(self, config):
        return [{"rate_requirement": r} for r in self.requirements]

    def evaluate(self, config, point, method, solver):
        r = point["rate_requirement"]
        sc = generate_scenario(config.with_overrides(rate_requirement=(r,)))
        alloc = allocate_efm(sc)
        rep = optimise(sc, alloc, method, solver)
        satisfied = satisfied_rt_count(sc, alloc, rep.theta)
        all_rt = sum(su.is_rt for su in sc.users)
        compliant = rep.objective if rep.feasible and satisfied == all_rt else 0.0
        return [(r, rep.objective, compliant, satisfied, int(rep.feasible), int(rep.fallback))]


def _thresholds(lo_exp, hi_exp, per_decade):
    n = int(round((hi_exp - lo_exp) * per_decade)) + 1
    return tuple(float(f"{v:.6g}") for v in np.logspace(lo_exp, hi_exp, n))


class SumRateVsInterference(_Experiment):
    """Four users, 16 sub-channels, common PU threshold from -110 to -90 dBm."""

    name = "sumrate-vs-interference"
    columns = ("interference_threshold", "sum_rate", "feasible", "fallback", "converged")
    thresholds = _thresholds(-14.0, -12.0, 4)

    def default_config(self):
        # users at a common 100 m so that the rate requirement is reachable
        return ScenarioConfig(num_users=4, num_rt=4, num_subchannels=16, num_available=16,
                              harvest_rate=(5.0,), rate_requirement=(5.0,),
                              distance_min=100.0, distance_max=100.0)

    def points(self, config):
        return [{"interference_threshold": t} for t in self.thresholds]

    def evaluate(self, config, point, method, solver):
        t = point["interference_threshold"]
        sc = generate_scenario(config.with_overrides(interference_threshold=t))
        alloc = allocate_efm(sc)
        rep = optimise(sc, alloc, method, solver)
        return [(t, rep.objective, int(rep.feasible), int(rep.fallback), int(rep.converged))]


class ThetaVsInterference(_Experiment):
    """Mean harvesting ratio against the PU threshold for three average
    harvesting rates (each user's rate drawn within +-20% of the average)."""

    name = "theta-vs-interference"
    columns = ("harvest_rate", "interference_threshold", "theta_mean", "theta_min",
               "theta_max", "sum_rate", "feasible")
    harvest_rates = (1.0, 3.0, 9.0)
    thresholds = _thresholds(-15.0, -10.0, 2)

    def default_config(self):
        return ScenarioConfig(num_users=4, num_rt=0, num_subchannels=16, num_available=16,
                              sensing_energy=(1e-4,), harvest_rate_spread=0.2)

    def points(self, config):
        return [{"harvest_rate": c, "interference_threshold": t}
                for c in self.harvest_rates for t in self.thresholds]

    def evaluate(self, config, point, method, solver):
        cfg = config.with_overrides(harvest_rate=(point["harvest_rate"],),
                                    interference_threshold=point["interference_threshold"])
        sc = generate_scenario(cfg)
        # equal blocks: with no rate floors EFM would hand every sub-channel to one user
        alloc = fixed_blocks(cfg.num_users, cfg.num_subchannels // cfg.num_users)
        rep = optimise(sc, alloc, method, solver)
        th = np.array([rep.theta[i] for i in alloc.allocated_users])
        return [(point["harvest_rate"], point["interference_threshold"], float(th.mean()),
                 float(th.min()), float(th.max()), rep.objective, int(rep.feasible))]


EXPERIMENTS = {e.name: e for e in (OneSuSurface(), SumRateVsSubchannels(), EfmVsBaseline(),
                                   ClosedFormVsOptimal(), SumRateVsUsers(),
                                   SumRateVsRateConstraint(), SumRateVsInterference(),
                                   ThetaVsInterference())}


def get_experiment(name):
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise UsageError(f"unknown experiment {name!r}; choose from "
                         f"{', '.join(sorted(EXPERIMENTS))}") from None


def default_config(name):
    return get_experiment(name).default_config()


def _run_point(name, config, point, method, solver):
    return get_experiment(name).evaluate(config, point, method, solver)


def run_experiment(name, config=None, *, method="closed", solver=None, jobs=1):
    """Run one sweep end to end and tabulate it.

    ``config`` defaults to the experiment's own defaults; ``method`` picks
    the structure optimiser ("closed": closed form with dual fallback,
    "dual": dual subgradient throughout).
    """
    exp = get_experiment(name)
    if method not in ("closed", "dual"):
        raise UsageError(f"method must be 'closed' or 'dual', not {method!r}")
    config = config if config is not None else exp.default_config()
    solver = solver or SolverConfig(max_iter=EXPERIMENT_MAX_ITER)
    points = exp.points(config)
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_point, [name] * len(points), [config] * len(points),
                                   points, [method] * len(points), [solver] * len(points)))
    else:
        chunks = [exp.evaluate(config, p, method, solver) for p in points]
    rows = tuple(tuple(_plain(v) for v in row) for chunk in chunks for row in chunk)
    return ExperimentResult(name, exp.columns, rows, config.seed, config.config_hash(), method)


def _plain(value):
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, bool, np.bool_)):
        return int(value)
    return value


def _cell(value):
    if isinstance(value, float):
        return "%.12g" % value
    return str(value)


def format_results(result):
    """CSV text: provenance columns first, then the experiment's columns."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROVENANCE + tuple(result.columns))
    prov = (result.experiment, result.seed, result.config_hash, result.method)
    for row in result.rows:
        w.writerow([_cell(v) for v in prov + tuple(row)])
    return buf.getvalue()


def write_results(result, path):
    Path(path).write_text(format_results(result), encoding="utf-8")


def read_results(path):
    """Rows of a results CSV as dicts of strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def hash_mismatches(rows, config):
    """Indices of rows whose ``config_hash`` differs from ``config``'s."""
    h = config.config_hash()
    return [k for k, row in enumerate(rows) if row.get("config_hash") != h]


__all__ = ["EXPERIMENTS", "ExperimentResult", "default_config", "format_results",
           "get_experiment", "hash_mismatches", "read_results", "run_experiment",
           "write_results", "fixed_blocks"]
