"""Sub-channel allocation with the harvesting ratios held at their initial values.

The EFM scheme serves real-time users first, richest energy figure of merit
(harvest rate over sensing energy) first, each time handing out the remaining
sub-channel with the best rate for the chosen user.  Whatever is left goes to
the non-real-time users by the same preference.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleUserError
from .model import Allocation, _rate, effective_gain, feasible_interval


def initial_theta(su, params):
    """Midpoint of the feasible harvesting interval."""
    lo, hi = feasible_interval(su, params)
    if not lo < hi:
        raise InfeasibleUserError(
            f"user {su.id}: empty feasible interval ({lo}, {hi})")
    return 0.5 * (lo + hi)


def initial_thetas(scenario):
    return np.array([initial_theta(su, scenario.params) for su in scenario.users])


def efm_factor(su):
    """Harvest rate over sensing energy; zero sensing energy ranks first (inf)."""
    return su.efm


def rate_table(scenario, theta):
    """``r[i, j]``: rate of user i on sub-channel j at harvesting ratio theta[i]."""
    params = scenario.params
    K = scenario.num_users
    table = np.zeros((K, params.num_subchannels))
    for i, su in enumerate(scenario.users):
        H = effective_gain(su, params)
        table[i] = _rate(H, su, theta[i], params)
    return table


@dataclass
class EfmState:
    remaining: list
    rates: np.ndarray
    sets: list
    allocated_rt: set = field(default_factory=set)
    allocated_nrt: set = field(default_factory=set)
    trace: list = field(default_factory=list)

    def allocation(self):
        return Allocation(tuple(tuple(s) for s in self.sets))


def _by_priority(candidates, efm):
    # highest EFM first, ties to the lower id
    return max(candidates, key=lambda i: (efm[i], -i))


def _best_subchannel(table_row, remaining):
    # highest rate, ties to the lower index
    return max(remaining, key=lambda j: (table_row[j], -j))


def allocate_efm(scenario, theta_init=None, return_state=False):
    """EFM-based allocation.

    Phase 1 loops while sub-channels remain and some RT user is below its
    requirement; the chosen user is the unsatisfied RT user with the largest
    EFM.  Phase 2 hands every remaining sub-channel to the NRT user with the
    largest EFM.  Without NRT users each remaining sub-channel goes to the RT
    user with the highest rate on it.  All available sub-channels end up
    assigned.  Interference is not looked at.
    """
    if theta_init is None:
        theta_init = initial_thetas(scenario)
    users = scenario.users
    table = rate_table(scenario, theta_init)
    efm = [efm_factor(su) for su in users]
    state = EfmState(
        remaining=list(scenario.available),
        rates=np.zeros(len(users)),
        sets=[[] for _ in users],
    )
    rt = [su.id for su in users if su.is_rt]
    nrt = [su.id for su in users if not su.is_rt]

    def give(i, phase):
        j = _best_subchannel(table[i], state.remaining)
        state.remaining.remove(j)
        state.sets[i].append(j)
        state.rates[i] += table[i, j]
        state.trace.append((phase, i, j))

    while state.remaining:
        short = [i for i in rt if state.rates[i] < users[i].rate_requirement]
        if not short:
            break
        give(_by_priority(short, efm), "rt")
    state.allocated_rt = {i for i in rt if state.sets[i]}

    if nrt:
        while state.remaining:
            give(_by_priority(nrt, efm), "nrt")
    elif rt:
        # no NRT users: each leftover sub-channel goes to the RT user that
        # gets the highest rate on it, in sub-channel order
        for j in sorted(state.remaining):
            i = max(rt, key=lambda i: (table[i, j], -i))
            state.remaining.remove(j)
            state.sets[i].append(j)
            state.rates[i] += table[i, j]
            state.trace.append(("rt-fill", i, j))
    state.allocated_nrt = {i for i in nrt if state.sets[i]}

    alloc = state.allocation()
    return (alloc, state) if return_state else alloc


def allocate_baseline(scenario, theta_init=None):
    """Greedy max-rate allocation without EFM priority.

    While some RT user is short of its requirement, assign the best
    (user, sub-channel) rate pair among those users; then keep assigning the
    best pair among NRT users (RT users if there are none).
    """
    if theta_init is None:
        theta_init = initial_thetas(scenario)
    users = scenario.users
    table = rate_table(scenario, theta_init)
    remaining = list(scenario.available)
    rates = np.zeros(len(users))
    sets = [[] for _ in users]
    rt = [su.id for su in users if su.is_rt]
    nrt = [su.id for su in users if not su.is_rt]

    def best_pair(pool):
        return max(((i, j) for i in pool for j in remaining),
                   key=lambda p: (table[p[0], p[1]], -p[0], -p[1]))

    while remaining:
        short = [i for i in rt if rates[i] < users[i].rate_requirement]
        if not short:
            break
        i, j = best_pair(short)
        remaining.remove(j)
        sets[i].append(j)
        rates[i] += table[i, j]
    pool = nrt if nrt else rt
    while remaining and pool:
        i, j = best_pair(pool)
        remaining.remove(j)
        sets[i].append(j)
        rates[i] += table[i, j]
    return Allocation(tuple(tuple(s) for s in sets))


def user_rates(scenario, allocation, theta):
    table = rate_table(scenario, theta)
    return np.array([table[i, list(s)].sum() if s else 0.0
                     for i, s in enumerate(allocation.sets)])


def satisfied_rt_count(scenario, allocation, theta):
    """Number of RT users whose total rate meets their requirement."""
    rates = user_rates(scenario, allocation, theta)
    return int(sum(1 for su in scenario.users
                   if su.is_rt and rates[su.id] >= su.rate_requirement))
