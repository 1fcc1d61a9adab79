"""Domain types and the per-user rate model of the harvest/sense/transmit slot.

Conventions: SI units throughout (s, J, W, Hz), rates in bit/s/Hz, sub-channel
and user indices are 0-based.  A user harvests for ``theta * T``, senses for
``tau`` and transmits for the rest of the slot with all the energy left over.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, InfeasibleThetaError, InfeasibleUserError


def _frozen_array(values, dtype=float, ndim=None):
    arr = np.array(values, dtype=dtype, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise DomainError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def snr_gap(ber):
    """SNR gap of uncoded MQAM at the target bit error rate."""
    if not 0.0 < ber < 0.2:
        raise DomainError(f"ber must lie in (0, 0.2), got {ber!r}")
    return -math.log(5.0 * ber) / 1.5


class TrafficClass(str, enum.Enum):
    RT = "RT"
    NRT = "NRT"


@dataclass(frozen=True)
class SystemParams:
    """Constants shared by every user of the slotted OFDM system."""

    slot_duration: float = 1e-3
    bandwidth: float = 62.5e3
    noise_psd: float = 1.6e-18
    snr_gap: float = -math.log(5e-3) / 1.5
    symbol_duration: float = 16e-6
    start_frequency: float = 915e6
    num_subchannels: int = 16

    def __post_init__(self):
        for name in ("slot_duration", "bandwidth", "noise_psd", "snr_gap",
                     "symbol_duration", "start_frequency"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")
        if int(self.num_subchannels) != self.num_subchannels or self.num_subchannels < 1:
            raise DomainError("num_subchannels must be a positive integer")

    @property
    def noise_power(self):
        return self.bandwidth * self.noise_psd


@dataclass(frozen=True, eq=False)
class SecondaryUser:
    """One energy-harvesting secondary user.

    ``gains[j]`` is the power gain |h_ij|^2 towards the access point on
    sub-channel j; ``cross_gains[j, m]`` the power gain towards the receiver
    of primary user m when transmitting on sub-channel j.
    ``rate_requirement`` is the hard minimum for RT users and the softer rate
    constraint for NRT users.
    """

    id: int
    traffic: TrafficClass
    harvest_rate: float
    sensing_energy: float
    sensing_time: float
    rate_requirement: float
    gains: np.ndarray
    cross_gains: np.ndarray
    pu_interference: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "traffic", TrafficClass(self.traffic))
        object.__setattr__(self, "gains", _frozen_array(self.gains, ndim=1))
        cross = np.asarray(self.cross_gains, dtype=float)
        if cross.ndim == 1:
            cross = cross[:, None]
        object.__setattr__(self, "cross_gains", _frozen_array(cross, ndim=2))
        if not self.harvest_rate > 0.0:
            raise DomainError("harvest_rate must be > 0")
        if self.sensing_energy < 0.0:
            raise DomainError("sensing_energy must be >= 0")
        if not self.sensing_time > 0.0:
            raise DomainError("sensing_time must be > 0")
        if self.rate_requirement < 0.0:
            raise DomainError("rate_requirement must be >= 0")
        if self.pu_interference < 0.0:
            raise DomainError("pu_interference must be >= 0")
        if np.any(self.gains < 0.0) or np.any(self.cross_gains < 0.0):
            raise DomainError("channel gains must be non-negative")
        if self.cross_gains.shape[0] != self.gains.shape[0]:
            raise DomainError("cross_gains must have one row per sub-channel")

    @property
    def is_rt(self):
        return self.traffic is TrafficClass.RT

    @property
    def efm(self):
        """Energy figure of merit: harvest rate over sensing energy."""
        if self.sensing_energy == 0.0:
            return math.inf
        return self.harvest_rate / self.sensing_energy


@dataclass(frozen=True)
class PrimaryUser:
    id: int
    interference_threshold: float
    available: frozenset = frozenset()
    unavailable: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "available", frozenset(int(j) for j in self.available))
        object.__setattr__(self, "unavailable", frozenset(int(j) for j in self.unavailable))
        if not self.interference_threshold > 0.0:
            raise DomainError("interference_threshold must be > 0")
        if self.available & self.unavailable:
            raise DomainError("available and unavailable sub-channel sets overlap")

    @property
    def band(self):
        return tuple(sorted(self.available | self.unavailable))


@dataclass(frozen=True, eq=False)
class SensingModel:
    """Per-sub-channel occupancy prior and fused sensing error rates."""

    prior: np.ndarray
    miss: np.ndarray
    false_alarm: np.ndarray
    available: tuple

    def __post_init__(self):
        for name in ("prior", "miss", "false_alarm"):
            arr = _frozen_array(getattr(self, name), ndim=1)
            if np.any(arr < 0.0) or np.any(arr > 1.0):
                raise DomainError(f"{name} probabilities must lie in [0, 1]")
            object.__setattr__(self, name, arr)
        n = self.prior.size
        if self.miss.size != n or self.false_alarm.size != n:
            raise DomainError("sensing arrays differ in length")
        avail = tuple(sorted(int(j) for j in self.available))
        if len(set(avail)) != len(avail) or any(not 0 <= j < n for j in avail):
            raise DomainError("available set must be distinct indices in range")
        object.__setattr__(self, "available", avail)


@dataclass(frozen=True)
class Allocation:
    """Sub-channel sets per user; every sub-channel belongs to at most one user."""

    sets: tuple

    def __post_init__(self):
        sets = tuple(tuple(sorted(int(j) for j in s)) for s in self.sets)
        seen = set()
        for s in sets:
            for j in s:
                if j in seen:
                    raise DomainError(f"sub-channel {j} assigned twice")
                seen.add(j)
        object.__setattr__(self, "sets", sets)

    @classmethod
    def empty(cls, num_users):
        return cls(tuple(() for _ in range(num_users)))

    @classmethod
    def from_mapping(cls, mapping, num_users):
        return cls(tuple(tuple(mapping.get(i, ())) for i in range(num_users)))

    def __getitem__(self, user):
        return self.sets[user]

    def __len__(self):
        return len(self.sets)

    @property
    def allocated_users(self):
        return tuple(i for i, s in enumerate(self.sets) if s)

    @property
    def assigned(self):
        return frozenset(j for s in self.sets for j in s)

    def matrix(self, num_subchannels):
        """Binary assignment matrix f[i, j]."""
        f = np.zeros((len(self.sets), num_subchannels), dtype=int)
        for i, s in enumerate(self.sets):
            f[i, list(s)] = 1
        return f


@dataclass(frozen=True, eq=False)
class Scenario:
    params: SystemParams
    users: tuple
    pus: tuple
    sensing: SensingModel

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "pus", tuple(self.pus))
        n = self.params.num_subchannels
        for i, su in enumerate(self.users):
            if su.id != i:
                raise DomainError("users must be numbered 0..K-1 in order")
            if su.gains.size != n:
                raise DomainError(f"user {i} has {su.gains.size} gains, expected {n}")
            if su.cross_gains.shape[1] != len(self.pus):
                raise DomainError(f"user {i} cross gains do not match the number of PUs")
        if self.sensing.prior.size != n:
            raise DomainError("sensing model size does not match num_subchannels")

    @property
    def num_users(self):
        return len(self.users)

    @property
    def available(self):
        return self.sensing.available

    @cached_property
    def interference(self):
        """Array ``I[i, l, m]``: posterior-weighted interference at PU m per watt
        transmitted by user i on sub-channel l."""
        from .interference import interference_tensor

        arr = interference_tensor(self)
        arr.setflags(write=False)
        return arr

    @cached_property
    def effective_gains(self):
        """Array ``H[i, j]`` of normalised channel gains."""
        return np.array([effective_gain(su, self.params) for su in self.users])

    def replace_users(self, users):
        return Scenario(self.params, tuple(users), self.pus, self.sensing)


# --------------------------------------------------------------------------
# per-user formulas


def feasible_interval(su, params):
    """Open interval of harvesting ratios with positive energy and transmit time."""
    T = params.slot_duration
    return su.sensing_energy / (su.harvest_rate * T), (T - su.sensing_time) / T


def effective_gain(su, params, subchannel=None):
    """|h|^2 / (Gamma (w N0 + I_i)) for one sub-channel or for all of them."""
    denom = params.snr_gap * (params.noise_power + su.pu_interference)
    gains = su.gains if subchannel is None else su.gains[subchannel]
    return gains / denom


def _check_theta(su, theta, params, allow_upper):
    lo, hi = feasible_interval(su, params)
    if not lo < hi:
        raise InfeasibleUserError(
            f"user {su.id}: sensing energy exceeds what can be harvested (interval [{lo}, {hi}])")
    th = np.asarray(theta, dtype=float)
    bad = (th < lo) | (th > hi) | (~np.isfinite(th))
    if not allow_upper:
        bad |= th >= hi
    if np.any(bad):
        raise InfeasibleThetaError(
            f"user {su.id}: theta={theta!r} outside feasible interval ({lo}, {hi})")
    return th


def transmit_power(su, theta, params):
    """Transmit power (W) when all energy left after sensing is spent in the
    remaining transmit window."""
    th = _check_theta(su, theta, params, allow_upper=False)
    T = params.slot_duration
    out = (su.harvest_rate * th * T - su.sensing_energy) / (T - th * T - su.sensing_time)
    return float(out) if out.ndim == 0 else out


def _rate(H, su, theta, params):
    # log1p form; the transmit window factor kills the log at the upper end
    T = params.slot_duration
    th = np.asarray(theta, dtype=float)
    window = T - th * T - su.sensing_time
    energy = su.harvest_rate * th * T - su.sensing_energy
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.asarray(H, dtype=float) * energy / window
        r = (window / T) * np.log1p(snr) / math.log(2.0)
    return np.where(window <= 0.0, 0.0, r)


def rate_per_subchannel(su, subchannel, theta, params):
    """Achievable rate (bit/s/Hz) of user ``su`` on one sub-channel."""
    H = effective_gain(su, params, subchannel)
    if not H > 0.0:
        raise DomainError(f"user {su.id} has zero effective gain on sub-channel {subchannel}")
    _check_theta(su, theta, params, allow_upper=True)
    r = _rate(H, su, theta, params)
    return float(r) if r.ndim == 0 else r


def total_rate(su, subchannels, theta, params):
    """Sum of the user's per-sub-channel rates; every sub-channel carries the full power."""
    subchannels = list(subchannels)
    if not subchannels:
        return 0.0 if np.ndim(theta) == 0 else np.zeros(np.shape(theta))
    _check_theta(su, theta, params, allow_upper=True)
    H = effective_gain(su, params)[subchannels]
    th = np.asarray(theta, dtype=float)
    r = _rate(H.reshape((-1,) + (1,) * th.ndim), su, th, params).sum(axis=0)
    return float(r) if r.ndim == 0 else r


def sum_rate(scenario, allocation, theta):
    """Objective of the structure problem: total rate over allocated users."""
    total = 0.0
    for i in allocation.allocated_users:
        total += total_rate(scenario.users[i], allocation[i], theta[i], scenario.params)
    return total


# --------------------------------------------------------------------------
# constraint evaluation


@dataclass(frozen=True, eq=False)
class ConstraintSlacks:
    """Signed slacks; positive means satisfied.

    energy[i]       chi*theta*T - eps                (J)
    time[i]         T - theta*T - tau                (s)
    interference[m] I_th - sum of interference        (W)
    rate[i]         R_i - requirement (RT and NRT)   (bit/s/Hz)
    bounds[i]       min(theta, 1 - theta)
    Users without sub-channels have zero rate.
    """

    energy: np.ndarray
    time: np.ndarray
    interference: np.ndarray
    rate: np.ndarray
    bounds: np.ndarray
    rt_mask: np.ndarray
    allocated_mask: np.ndarray
    interference_scale: np.ndarray
    rate_scale: np.ndarray
    energy_scale: np.ndarray
    time_scale: float

    @property
    def rt_rate(self):
        return self.rate[self.rt_mask & self.allocated_mask]

    @property
    def nrt_rate(self):
        return self.rate[~self.rt_mask & self.allocated_mask]

    def normalized_violation(self):
        """Largest constraint violation, each constraint divided by its natural scale."""
        alloc = self.allocated_mask
        parts = [
            -self.energy[alloc] / self.energy_scale[alloc],
            -self.time[alloc] / self.time_scale,
            -self.interference / self.interference_scale,
            -self.rate[alloc] / self.rate_scale[alloc],
            -self.bounds[alloc],
        ]
        flat = np.concatenate([np.atleast_1d(p) for p in parts])
        if flat.size == 0:
            return 0.0
        return float(max(0.0, np.max(flat)))

    def as_dict(self):
        return {
            "energy": self.energy.tolist(),
            "time": self.time.tolist(),
            "interference": self.interference.tolist(),
            "rate": self.rate.tolist(),
            "bounds": self.bounds.tolist(),
        }


def evaluate_constraints(scenario, allocation, theta):
    """Slack of every constraint of the joint problem at ``theta``.

    Never raises for infeasible points: an unbounded power shows up as an
    infinitely negative interference slack.
    """
    params = scenario.params
    T = params.slot_duration
    theta = np.asarray(theta, dtype=float)
    K = scenario.num_users
    chi = np.array([su.harvest_rate for su in scenario.users])
    eps = np.array([su.sensing_energy for su in scenario.users])
    tau = np.array([su.sensing_time for su in scenario.users])
    req = np.array([su.rate_requirement for su in scenario.users])
    rt = np.array([su.is_rt for su in scenario.users], dtype=bool)

    energy = chi * theta * T - eps
    window = T - theta * T - tau
    alloc_mask = np.array([bool(allocation[i]) for i in range(K)], dtype=bool)

    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.where(window > 0.0, np.maximum(energy, 0.0) / window, np.inf)
    load = np.zeros(len(scenario.pus))
    I = scenario.interference if scenario.pus else None
    for i in allocation.allocated_users:
        per_watt = I[i, list(allocation[i]), :].sum(axis=0) if I is not None else 0.0
        with np.errstate(invalid="ignore"):
            load = load + np.where(per_watt > 0.0, power[i] * per_watt, 0.0)
    thresholds = np.array([pu.interference_threshold for pu in scenario.pus])
    interference = thresholds - load

    rate = np.empty(K)
    for i in range(K):
        su = scenario.users[i]
        if not allocation[i] or energy[i] < 0.0 or window[i] < 0.0:
            achieved = 0.0
        else:
            H = effective_gain(su, params)[list(allocation[i])]
            achieved = float(np.sum(_rate(H, su, theta[i], params)))
        rate[i] = achieved - req[i]

    return ConstraintSlacks(
        energy=energy,
        time=window,
        interference=interference,
        rate=rate,
        bounds=np.minimum(theta, 1.0 - theta),
        rt_mask=rt,
        allocated_mask=alloc_mask,
        interference_scale=thresholds,
        rate_scale=np.maximum(req, 1.0),
        energy_scale=chi * T,
        time_scale=T,
    )
