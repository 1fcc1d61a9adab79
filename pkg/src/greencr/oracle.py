"""Brute-force reference solvers.

Everything here recomputes rates and powers from the raw user fields with
its own arithmetic (log-difference form, no ``log1p``) so that a shared bug
cannot make a solver agree with its own oracle.  Slow on purpose.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleUserError, OracleSizeError
from .model import Allocation
from .structopt import METHOD_GRID, SolveReport

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_GUARD = 1e-9
MAX_ENUMERATION = 10 ** 7
JOINT_MAX_USERS = 6


@dataclass(frozen=True)
class GridSpec:
    """Dense scan followed by golden-section refinement.

    ``product_points`` and ``product_budget`` govern the joint (product
    grid) search of :func:`constrained_grid_solve`.
    """

    points: int = 10_001
    refine_iterations: int = 80
    product_points: int = 201
    product_budget: int = 2_000_000
    product_levels: int = 80

    def __post_init__(self):
        if self.points < 3:
            raise ValueError("GridSpec.points must be >= 3")
        if self.refine_iterations < 0:
            raise ValueError("GridSpec.refine_iterations must be >= 0")


# --------------------------------------------------------------------------
# independent arithmetic


def _raw_gains(su, params):
    noise = params.bandwidth * params.noise_psd + su.pu_interference
    return np.array([g / (params.snr_gap * noise) for g in su.gains.tolist()])


def _bounds(su, params):
    T = params.slot_duration
    lo = su.sensing_energy / (su.harvest_rate * T)
    hi = 1.0 - su.sensing_time / T
    if not lo < hi:
        raise InfeasibleUserError(f"user {su.id}: empty feasible interval")
    return lo, hi


def _user_rate(su, H, theta, params):
    """Summed rate over gains ``H`` at ``theta`` (array); log-difference form."""
    T = params.slot_duration
    theta = np.asarray(theta, dtype=float)
    tx_time = T * (1.0 - theta) - su.sensing_time
    stored = su.harvest_rate * T * theta - su.sensing_energy
    out = np.zeros(theta.shape)
    for h in np.asarray(H, dtype=float):
        if h == 0.0:
            continue
        out = out + tx_time * (np.log(tx_time + h * stored) - np.log(tx_time))
    return out / (T * math.log(2.0))


def _user_power(su, theta, params):
    T = params.slot_duration
    theta = np.asarray(theta, dtype=float)
    return (su.harvest_rate * T * theta - su.sensing_energy) / (T * (1.0 - theta) - su.sensing_time)


# --------------------------------------------------------------------------
# one user


def _golden_max(f, a, b, iterations):
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iterations):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def scan_and_refine(f, lo, hi, grid=GridSpec()):
    """Maximise a scalar function on ``[lo, hi]``: dense scan, then golden
    section on the two cells around the best sample.

    Returns ``(x, flat)`` where ``flat`` means the scan saw a constant
    function; the midpoint is returned then.
    """
    xs = np.linspace(lo, hi, grid.points)
    ys = np.asarray(f(xs), dtype=float)
    if np.all(ys == ys[0]):
        return 0.5 * (lo + hi), True
    k = int(np.argmax(ys))
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, grid.points - 1)]
    x = _golden_max(lambda t: float(f(np.array(t))), a, b, grid.refine_iterations)
    return x, False


def grid_theta_optimum(su, subchannels, params, grid=GridSpec(), full_output=False):
    """Harvesting ratio maximising the user's summed rate, by brute force."""
    lo, hi = _bounds(su, params)
    delta = _GUARD * (hi - lo)
    H = _raw_gains(su, params)[list(subchannels)]
    x, flat = scan_and_refine(lambda t: _user_rate(su, H, t, params), lo + delta, hi - delta, grid)
    return (x, flat) if full_output else x


# --------------------------------------------------------------------------
# constraint checks (own arithmetic)


def _check(scenario, sets, theta, tol):
    """Normalised violation of C1-C5 for the given sets and ratios."""
    params = scenario.params
    T = params.slot_duration
    worst = 0.0
    load = np.zeros(len(scenario.pus))
    I = scenario.interference if scenario.pus else None
    for i, s in enumerate(sets):
        if not s:
            continue
        su = scenario.users[i]
        th = float(theta[i])
        worst = max(worst, (su.sensing_energy - su.harvest_rate * th * T) / (su.harvest_rate * T))
        worst = max(worst, (th * T + su.sensing_time - T) / T)
        H = _raw_gains(su, params)[list(s)]
        rate = float(_user_rate(su, H, np.array(th), params))
        worst = max(worst, (su.rate_requirement - rate) / max(su.rate_requirement, 1.0))
        if I is not None:
            load += float(_user_power(su, np.array(th), params)) * I[i, list(s), :].sum(axis=0)
    for m, pu in enumerate(scenario.pus):
        worst = max(worst, (load[m] - pu.interference_threshold) / pu.interference_threshold)
    return worst, worst <= tol


# --------------------------------------------------------------------------
# allocation enumeration


def exhaustive_allocation(scenario, theta=None, grid=GridSpec(), tol=1e-6, reverse=False):
    """Best assignment of every available sub-channel to some user.

    Each assignment is scored by its sum rate, with every user's ratio set
    to its brute-force unconstrained optimum (or to ``theta`` when given),
    and kept only if it meets the interference and rate constraints there.
    Ties go to the lexicographically smallest owner vector, so the result
    does not depend on enumeration order.  Returns ``(allocation,
    objective)``; ``(None, -inf)`` when nothing is feasible.
    """
    K = scenario.num_users
    avail = list(scenario.available)
    M = len(avail)
    if K ** M > MAX_ENUMERATION:
        raise OracleSizeError(f"{K}^{M} assignments exceed the limit of {MAX_ENUMERATION}")
    params = scenario.params
    cache = {}

    def user_best(i, subset):
        key = (i, subset)
        if key not in cache:
            su = scenario.users[i]
            H = _raw_gains(su, params)[list(subset)]
            th = float(theta[i]) if theta is not None else grid_theta_optimum(su, subset, params, grid)
            cache[key] = (th, float(_user_rate(su, H, np.array(th), params)))
        return cache[key]

    owners_iter = itertools.product(range(K), repeat=M)
    if reverse:
        owners_iter = itertools.product(range(K - 1, -1, -1), repeat=M)
    best = (-math.inf, None)
    best_owner = None
    for owners in owners_iter:
        sets = [[] for _ in range(K)]
        for j, o in zip(avail, owners):
            sets[o].append(j)
        sets = [tuple(s) for s in sets]
        thetas = np.zeros(K)
        total = 0.0
        for i, s in enumerate(sets):
            if s:
                thetas[i], r = user_best(i, s)
                total += r
        if total < best[0] or (total == best[0] and owners > best_owner):
            continue
        _, ok = _check(scenario, sets, thetas, tol)
        if ok:
            best = (total, sets)
            best_owner = owners
    if best[1] is None:
        return None, -math.inf
    return Allocation(tuple(best[1])), best[0]


# --------------------------------------------------------------------------
# constrained harvesting ratios


def _flat_report(theta, objective, violation, feasible, accuracy, message=""):
    return SolveReport(theta=theta, objective=objective, iterations=0, converged=feasible,
                       max_constraint_violation=violation, method=METHOD_GRID,
                       feasible=feasible, accuracy=accuracy, message=message)


def constrained_grid_solve(scenario, allocation, grid=GridSpec(), tol=1e-6):
    """Best feasible harvesting ratios for a fixed allocation, by grid search.

    First the per-user brute-force optima are tried; if they satisfy every
    constraint they are optimal (the constraints only cut the box).
    Otherwise, for at most six allocated users, a product grid is searched
    and repeatedly zoomed around the best feasible point.  ``accuracy`` in the
    report is the final grid spacing relative to the widest interval.
    """
    params = scenario.params
    K = scenario.num_users
    users = list(allocation.allocated_users)
    theta = np.array([0.5 * sum(_bounds(su, params)) for su in scenario.users])
    if not users:
        return _flat_report(theta, 0.0, 0.0, True, 0.0)

    free = theta.copy()
    total = 0.0
    for i in users:
        su = scenario.users[i]
        free[i] = grid_theta_optimum(su, allocation[i], params, grid)
        total += float(_user_rate(su, _raw_gains(su, params)[list(allocation[i])],
                                  np.array(free[i]), params))
    viol, ok = _check(scenario, allocation.sets, free, tol)
    if ok:
        return _flat_report(free, total, viol, True, 1e-8)

    # rates peak at the free optimum: a requirement missed there is unreachable
    for i in users:
        su = scenario.users[i]
        r = float(_user_rate(su, _raw_gains(su, params)[list(allocation[i])],
                             np.array(free[i]), params))
        if su.rate_requirement - r > tol * max(su.rate_requirement, 1.0):
            return _flat_report(free, math.nan, viol, False, math.nan,
                                "rate requirement unreachable: empty feasible set")

    if len(users) > JOINT_MAX_USERS:
        raise OracleSizeError(
            f"{len(users)} users with coupled constraints exceed the joint grid limit "
            f"of {JOINT_MAX_USERS}")
    return _product_search(scenario, allocation, users, free, grid, tol)


def _product_search(scenario, allocation, users, free, grid, tol):
    params = scenario.params
    n_users = len(users)
    per_dim = max(3, min(grid.product_points, int(grid.product_budget ** (1.0 / n_users))))
    bounds = []
    for i in users:
        lo, hi = _bounds(scenario.users[i], params)
        d = _GUARD * (hi - lo)
        bounds.append((lo + d, hi - d))
    window = [list(b) for b in bounds]
    thresholds = np.array([pu.interference_threshold for pu in scenario.pus])
    I = scenario.interference if scenario.pus else None
    best_x, best_val = None, -math.inf
    width0 = max(b - a for a, b in bounds)
    spacing = math.nan
    for _ in range(grid.product_levels):
        axes, rates, loads, rate_ok = [], [], [], []
        for k, i in enumerate(users):
            su = scenario.users[i]
            ax = np.linspace(window[k][0], window[k][1], per_dim)
            r = _user_rate(su, _raw_gains(su, params)[list(allocation[i])], ax, params)
            axes.append(ax)
            rates.append(r)
            rate_ok.append(r >= su.rate_requirement - tol * max(su.rate_requirement, 1.0))
            if I is not None:
                coupling = I[i, list(allocation[i]), :].sum(axis=0)
                loads.append(_user_power(su, ax, params)[:, None] * coupling[None, :])
        shape = (per_dim,) * n_users

        def broadcast(vec, k):
            s = [1] * n_users
            s[k] = per_dim
            return vec.reshape(s)

        total = sum(broadcast(rates[k], k) for k in range(n_users))
        feasible = np.ones(shape, dtype=bool)
        for k in range(n_users):
            feasible &= broadcast(rate_ok[k], k)
        for m in range(len(thresholds)):
            load = sum(broadcast(loads[k][:, m], k) for k in range(n_users))
            feasible &= load <= thresholds[m] * (1.0 + tol)
        total = np.where(feasible, total, -np.inf)
        flat = int(np.argmax(total))
        if not np.isfinite(total.flat[flat]):
            break
        pos = np.unravel_index(flat, shape)
        x = np.array([axes[k][pos[k]] for k in range(n_users)])
        if total.flat[flat] >= best_val:
            best_val, best_x = float(total.flat[flat]), x
        spacing = max((w[1] - w[0]) / (per_dim - 1) for w in window)
        if spacing <= 1e-10 * width0:
            break
        for k in range(n_users):
            # halve the window: a tighter zoom can lose optima in thin corners
            width = window[k][1] - window[k][0]
            half = max(2.0 * width / (per_dim - 1), 0.25 * width)
            lo = max(bounds[k][0], best_x[k] - half)
            hi = min(bounds[k][1], best_x[k] + half)
            window[k] = [lo, hi]

    theta = free.copy()
    if best_x is None:
        viol, _ = _check(scenario, allocation.sets, free, tol)
        return _flat_report(theta, math.nan, viol, False, math.nan, "no feasible grid point")
    for k, i in enumerate(users):
        theta[i] = best_x[k]
    viol, _ = _check(scenario, allocation.sets, theta, tol)
    return _flat_report(theta, best_val, viol, True, spacing / width0)
