"""Harvesting-ratio optimisation for a fixed sub-channel allocation.

Two routes are provided: the Lambert-W closed form for the interference-free
optimum of each user, and a projected dual subgradient method that handles
the interference and rate constraints.  Both share the per-user objective

    F_i(theta) = sum_j (a / T) log2(1 + H_j b / a),
    a = T - theta T - tau,   b = chi theta T - eps,

which is concave in theta for any positive gain (it is the perspective of a
concave function of an affine map).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, InfeasibleUserError, PreconditionError
from .lambertw import lambert_w0
from .model import evaluate_constraints, feasible_interval

LN2 = math.log(2.0)
GUARD = 1e-9

METHOD_CLOSED = "closed-form"
METHOD_DUAL = "dual-subgradient"
METHOD_GRID = "grid-oracle"


def guarded_interval(su, params, guard=GUARD):
    """Feasible interval shrunk by ``guard`` times its width on each side."""
    lo, hi = feasible_interval(su, params)
    if not lo < hi:
        raise InfeasibleUserError(f"user {su.id}: empty feasible interval ({lo}, {hi})")
    delta = guard * (hi - lo)
    return lo + delta, hi - delta


# --------------------------------------------------------------------------
# single user, interference free


def closed_form_theta(su, H, params, full_output=False):
    """Interference-free optimal harvesting ratio for one effective gain ``H``.

    theta* = (T - tau)/T - W H c / (T (H chi - 1)(1 + W)),  W = W0((H chi - 1)/e),
    c = chi (T - tau) - eps.  Evaluated as ``H c exp(-W) / (e T (1 + W))``,
    which uses ``W / (H chi - 1) = exp(-W) / e`` and stays finite as
    ``H chi -> 1``.

    With ``full_output`` returns ``(theta, interior)``; a result outside the
    open feasible interval is projected onto the guarded interval, flagged
    and warned about.
    """
    H = float(H)
    chi = su.harvest_rate
    if not H * chi > 1.0:
        raise PreconditionError(f"closed form needs H*chi > 1, got {H * chi!r}")
    lo, hi = feasible_interval(su, params)
    if not lo < hi:
        raise InfeasibleUserError(f"user {su.id}: empty feasible interval ({lo}, {hi})")
    T = params.slot_duration
    c = chi * (T - su.sensing_time) - su.sensing_energy
    w = lambert_w0((H * chi - 1.0) / math.e)
    theta = hi - H * c * math.exp(-w) / (math.e * T * (1.0 + w))
    interior = lo < theta < hi
    if not interior:
        g_lo, g_hi = guarded_interval(su, params)
        warnings.warn(f"user {su.id}: closed form {theta!r} outside ({lo}, {hi}); projected",
                      RuntimeWarning, stacklevel=2)
        theta = min(max(theta, g_lo), g_hi)
    return (theta, interior) if full_output else theta


def _window_terms(su, theta, params):
    T = params.slot_duration
    a = T - theta * T - su.sensing_time
    b = su.harvest_rate * theta * T - su.sensing_energy
    c = su.harvest_rate * (T - su.sensing_time) - su.sensing_energy
    return T, a, b, c


def stationarity_residual(su, H, theta, params):
    """``H c / u - ln(u / a)`` with ``u = a + H b``.

    Equals ``ln 2`` times the derivative of the single-sub-channel objective,
    so it is positive below the optimum, zero at it and negative above.
    ``H`` may be an array, in which case the terms are summed.
    """
    _, a, b, c = _window_terms(su, float(theta), params)
    H = np.asarray(H, dtype=float)
    u = a + H * b
    out = np.sum(H * c / u - np.log(u / a))
    return float(out)


def objective_derivative(su, H, theta, params):
    """Analytic derivative of the per-user objective (bit/s/Hz per unit theta)."""
    return stationarity_residual(su, H, theta, params) / LN2


# --------------------------------------------------------------------------
# vectorised per-user machinery


class _Users:
    """Per-user quantities of the allocated users, vectorised over users.

    Gains are held as a (users x sub-channels) matrix with zeros outside
    each user's set; a zero gain contributes nothing to any of the sums.
    """

    def __init__(self, users, H, params, guard=GUARD):
        self.users = list(users)
        self.T = params.slot_duration
        self.tau = np.array([su.sensing_time for su in self.users])
        self.chi = np.array([su.harvest_rate for su in self.users])
        self.eps = np.array([su.sensing_energy for su in self.users])
        self.H = np.asarray(H, dtype=float).reshape(len(self.users), -1)
        self.c = self.chi * (self.T - self.tau) - self.eps
        lo = self.eps / (self.chi * self.T)
        hi = (self.T - self.tau) / self.T
        bad = ~(lo < hi)
        if np.any(bad):
            i = self.users[int(np.flatnonzero(bad)[0])].id
            raise InfeasibleUserError(f"user {i}: empty feasible interval")
        self.lo = lo + guard * (hi - lo)
        self.hi = hi - guard * (hi - lo)

    def _ab(self, theta):
        a = self.T - theta * self.T - self.tau
        b = self.chi * theta * self.T - self.eps
        return a, b

    def rate(self, theta):
        a, b = self._ab(theta)
        return (a / self.T) * np.log1p(self.H * (b / a)[:, None]).sum(axis=1) / LN2

    def rate_slope(self, theta):
        a, b = self._ab(theta)
        u = a[:, None] + self.H * b[:, None]
        return (self.H * self.c[:, None] / u - np.log(u / a[:, None])).sum(axis=1) / LN2

    def rate_curvature(self, theta):
        a, b = self._ab(theta)
        u = a[:, None] + self.H * b[:, None]
        k = self.H * self.chi[:, None] - 1.0
        terms = -self.T / a[:, None] - self.T * k * (self.H * self.c[:, None] + u) / u ** 2
        return terms.sum(axis=1) / LN2

    def power(self, theta):
        a, b = self._ab(theta)
        return b / a

    def power_slope(self, theta):
        a, _ = self._ab(theta)
        return self.T * self.c / a ** 2

    def power_curvature(self, theta):
        a, _ = self._ab(theta)
        return 2.0 * self.T ** 2 * self.c / a ** 3


def _maximize_concave(slope, curvature, lo, hi, start=None, max_iter=200):
    """Vectorised maximisation of concave functions on ``[lo, hi]`` given the
    first and second derivative: Newton steps kept inside a shrinking
    bisection bracket.  Returns ``(x, interior)``."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    s_lo = slope(lo)
    s_hi = slope(hi)
    x = np.where(s_lo <= 0.0, lo, hi)
    interior = (s_lo > 0.0) & (s_hi < 0.0)
    if not interior.any():
        return x, interior
    a = lo.copy()
    b = hi.copy()
    if start is None:
        start = 0.5 * (lo + hi)
    x = np.where(interior, np.clip(start, lo, hi), x)
    active = interior.copy()
    for _ in range(max_iter):
        s = slope(x)
        d = curvature(x)
        a = np.where(active & (s > 0.0), x, a)
        b = np.where(active & (s <= 0.0), x, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = s / d
        tiny = np.isfinite(newton) & (np.abs(newton) <= 4e-16 * np.abs(x))
        nxt = x - newton
        bad = ~np.isfinite(nxt) | (nxt < a) | (nxt > b)
        nxt = np.where(tiny, x, np.where(bad, 0.5 * (a + b), nxt))
        x = np.where(active, nxt, x)
        done = tiny | (b - a <= 4e-16 * np.abs(x)) | (s == 0.0)
        active &= ~done
        if not active.any():
            break
    return x, interior


def _closed_form_start(su, H, params):
    Hm = float(np.mean(H)) if np.size(H) else 0.0
    if Hm * su.harvest_rate > 1.0:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return closed_form_theta(su, Hm, params)
    return None


def per_su_theta_optimize(su, subchannels, params, full_output=False):
    """Maximise the user's summed rate over its sub-channels.

    Root of the summed first-order condition, initialised at the closed form
    for the mean gain.  When no interior stationary point exists in the
    guarded interval the better endpoint is returned and flagged.
    """
    subchannels = list(subchannels)
    if not subchannels:
        raise DomainError(f"user {su.id}: empty sub-channel set")
    from .model import effective_gain

    H = np.asarray(effective_gain(su, params), dtype=float)[subchannels]
    lo, hi = guarded_interval(su, params)
    if not np.any(H > 0.0):
        # flat objective; any point is optimal
        theta = 0.5 * (lo + hi)
        return (theta, False) if full_output else theta
    block = _Users([su], H[None, :], params)
    start = _closed_form_start(su, H, params)
    x, interior = _maximize_concave(block.rate_slope, block.rate_curvature,
                                    block.lo, block.hi,
                                    None if start is None else np.array([start]))
    theta = float(x[0])
    return (theta, bool(interior[0])) if full_output else theta


# --------------------------------------------------------------------------
# certificates


def _guarded_grid(su, params, grid_size):
    lo, hi = guarded_interval(su, params)
    return np.linspace(lo, hi, int(grid_size))


def concavity_certificate(su, H, params, grid_size=1000):
    """True iff the centred second difference of the single-sub-channel rate
    is negative at every interior point of a uniform grid."""
    if not H * su.harvest_rate > 1.0:
        warnings.warn("concavity certificate requested outside H*chi > 1",
                      RuntimeWarning, stacklevel=2)
    theta = _guarded_grid(su, params, grid_size)
    if theta.size < 3:
        return True
    T, a, b, _ = _window_terms(su, theta, params)
    f = (a / T) * np.log1p(H * b / a) / LN2
    return bool(np.all(f[:-2] - 2.0 * f[1:-1] + f[2:] < 0.0))


def constraint_convexity_probe(su, params, grid_size=1000):
    """True iff the transmit power has a negative centred second difference at
    every interior grid point, i.e. looks concave in theta.

    Note the power is ``b / a`` with ``b`` increasing and ``a`` decreasing in
    theta; its second derivative ``2 T^2 c / a^3`` is positive, so for any
    feasible user this returns False once the grid has an interior point.
    """
    theta = _guarded_grid(su, params, grid_size)
    if theta.size < 3:
        return True
    _, a, b, _ = _window_terms(su, theta, params)
    p = b / a
    return bool(np.all(p[:-2] - 2.0 * p[1:-1] + p[2:] < 0.0))


# --------------------------------------------------------------------------
# Lagrangian and dual updates


@dataclass(frozen=True)
class StepSchedule:
    """Diminishing steps ``base / t**power`` per multiplier family.

    ``power = 1`` is the harmonic schedule (steps vanish, their sum diverges).
    Bases of ``None`` are filled in from the first subgradient (see
    :func:`calibrate_schedule`).
    """

    name: str = "harmonic"
    power: float = 1.0
    gain: float = 1.0
    lam: object = None
    mu: object = None
    nu: object = None
    rho_rt: object = None
    rho_nrt: object = None

    def step(self, base, t):
        return np.asarray(base, dtype=float) / float(t) ** self.power


@dataclass(frozen=True, eq=False)
class DualState:
    """Multipliers of the energy (lam), time (mu), interference (nu) and
    rate (rho_rt, rho_nrt) constraints.  Per-user arrays have one entry per
    user; entries of the other traffic class stay zero."""

    lam: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    rho_rt: np.ndarray
    rho_nrt: np.ndarray
    iteration: int = 0
    schedule: StepSchedule = field(default_factory=StepSchedule)

    def __post_init__(self):
        for name in ("lam", "mu", "nu", "rho_rt", "rho_nrt"):
            arr = np.array(getattr(self, name), dtype=float)
            if np.any(arr < 0.0) or np.any(~np.isfinite(arr)):
                raise DomainError(f"multiplier {name} must be finite and >= 0")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, num_users, num_pus, schedule=None):
        z = np.zeros(num_users)
        return cls(z, z, np.zeros(num_pus), z, z, 0, schedule or StepSchedule())

    def as_dict(self):
        return {k: getattr(self, k).tolist() for k in ("lam", "mu", "nu", "rho_rt", "rho_nrt")}


def _interference_weights(scenario, allocation):
    """``kappa[i, m]``: interference at PU m per watt of user i over its set."""
    K = scenario.num_users
    L = len(scenario.pus)
    out = np.zeros((K, L))
    if L == 0:
        return out
    I = scenario.interference
    for i in allocation.allocated_users:
        out[i] = I[i, list(allocation[i]), :].sum(axis=0)
    return out


def _gain_matrix(scenario, allocation):
    Hall = scenario.effective_gains
    H = np.zeros_like(Hall)
    for i, s in enumerate(allocation.sets):
        if s:
            H[i, list(s)] = Hall[i, list(s)]
    return H


@dataclass(frozen=True)
class _Subgradients:
    lam: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    rho_rt: np.ndarray
    rho_nrt: np.ndarray


def _subgradients(theta, scenario, allocation):
    """Constraint functions h(theta) <= 0 of every dualised constraint."""
    params = scenario.params
    T = params.slot_duration
    users = scenario.users
    K = len(users)
    theta = np.asarray(theta, dtype=float)
    alloc = np.array([bool(allocation[i]) for i in range(K)])
    chi = np.array([su.harvest_rate for su in users])
    eps = np.array([su.sensing_energy for su in users])
    tau = np.array([su.sensing_time for su in users])
    req = np.array([su.rate_requirement for su in users])
    rt = np.array([su.is_rt for su in users])

    g_lam = np.where(alloc, eps - chi * theta * T, 0.0)
    g_mu = np.where(alloc, theta * T + tau - T, 0.0)

    a = T - theta * T - tau
    b = chi * theta * T - eps
    # below the energy floor nothing is sent: zero power and zero rate, as in
    # evaluate_constraints
    live = alloc & (a > 0.0) & (b >= 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.where(live, b / a, 0.0)
    kappa = _interference_weights(scenario, allocation)
    thresholds = np.array([pu.interference_threshold for pu in scenario.pus])
    g_nu = power @ kappa - thresholds if len(scenario.pus) else np.zeros(0)

    H = _gain_matrix(scenario, allocation)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(live,
                        (a / T) * np.log1p(H * (b / a)[:, None]).sum(axis=1) / LN2, 0.0)
    g_rate = np.where(alloc, req - rate, 0.0)
    return _Subgradients(g_lam, g_mu, g_nu,
                         np.where(rt, g_rate, 0.0), np.where(~rt, g_rate, 0.0))


def lagrangian_value(theta, duals, scenario, allocation):
    """Negated sum rate plus the multiplier-weighted constraint functions.

    Only users holding sub-channels enter; the interference term of each
    user sums its per-sub-channel coefficients over its set.
    """
    params = scenario.params
    T = params.slot_duration
    theta = np.asarray(theta, dtype=float)
    g = _subgradients(theta, scenario, allocation)
    H = _gain_matrix(scenario, allocation)
    total = 0.0
    for i in allocation.allocated_users:
        su = scenario.users[i]
        a = T - theta[i] * T - su.sensing_time
        b = su.harvest_rate * theta[i] * T - su.sensing_energy
        total -= (a / T) * float(np.log1p(H[i] * b / a).sum()) / LN2
    total += float(duals.lam @ g.lam) + float(duals.mu @ g.mu)
    total += float(duals.nu @ g.nu) if g.nu.size else 0.0
    total += float(duals.rho_rt @ g.rho_rt) + float(duals.rho_nrt @ g.rho_nrt)
    return total


def _constraint_scales(scenario):
    T = scenario.params.slot_duration
    users = scenario.users
    return {
        "lam": np.array([su.harvest_rate * T for su in users]),
        "mu": np.full(len(users), T),
        "nu": np.array([pu.interference_threshold for pu in scenario.pus]),
        "rho_rt": np.array([max(su.rate_requirement, 1.0) for su in users]),
        "rho_nrt": np.array([max(su.rate_requirement, 1.0) for su in users]),
    }


def calibrate_schedule(schedule, theta, scenario, allocation):
    """Fill unset step bases with ``gain / (scale * |h|)`` from the first subgradient.

    Measure multipliers in objective units (multiplier times the
    constraint's natural scale) and constraints relative to that scale.
    The first step then moves every multiplier with a nonzero subgradient
    by exactly ``gain`` objective units, whatever the size of the initial
    violation.
    """
    g = _subgradients(theta, scenario, allocation)
    scales = _constraint_scales(scenario)
    updates = {}
    for name in ("lam", "mu", "nu", "rho_rt", "rho_nrt"):
        if getattr(schedule, name) is not None:
            continue
        h = np.abs(getattr(g, name))
        s = scales[name]
        with np.errstate(divide="ignore", invalid="ignore"):
            base = schedule.gain * np.where(h > 0.0, 1.0 / (s * h), 1.0 / s ** 2)
        updates[name] = base
    return replace(schedule, **updates)


def dual_update(duals, theta, scenario, allocation):
    """One projected subgradient ascent step on every multiplier.

    ``m <- [m + step_t * h(theta)]^+`` for each constraint ``h(theta) <= 0``,
    with ``t = duals.iteration + 1``.
    """
    g = _subgradients(theta, scenario, allocation)
    sched = duals.schedule
    t = duals.iteration + 1
    new = {}
    for name in ("lam", "mu", "nu", "rho_rt", "rho_nrt"):
        base = getattr(sched, name)
        base = 1.0 if base is None else base
        current = getattr(duals, name)
        new[name] = np.maximum(current + sched.step(base, t) * getattr(g, name), 0.0)
    return DualState(iteration=t, schedule=sched, **new)


# --------------------------------------------------------------------------
# solvers


@dataclass(frozen=True)
class SolverConfig:
    tol_dual: float = 1e-7
    tol_primal: float = 1e-6
    max_iter: int = 50_000
    schedule: StepSchedule = field(default_factory=StepSchedule)


@dataclass(frozen=True, eq=False)
class SolveReport:
    theta: np.ndarray
    objective: float
    iterations: int
    converged: bool
    max_constraint_violation: float
    method: str
    feasible: bool = True
    interior: tuple = ()
    duals: DualState | None = None
    fallback: bool = False
    accuracy: float = float("nan")
    message: str = ""


def _objective(scenario, allocation, theta):
    H = _gain_matrix(scenario, allocation)
    T = scenario.params.slot_duration
    total = 0.0
    for i in allocation.allocated_users:
        su = scenario.users[i]
        a = T - theta[i] * T - su.sensing_time
        b = su.harvest_rate * theta[i] * T - su.sensing_energy
        total += (a / T) * float(np.log1p(H[i] * b / a).sum()) / LN2
    return total


def _default_thetas(scenario):
    from .allocation import initial_theta

    return np.array([initial_theta(su, scenario.params) for su in scenario.users])


def unconstrained_thetas(scenario, allocation):
    """Per-user rate maximisers; users without sub-channels keep the midpoint."""
    theta = _default_thetas(scenario)
    interior = [True] * scenario.num_users
    for i in allocation.allocated_users:
        su = scenario.users[i]
        H = scenario.effective_gains[i, list(allocation[i])]
        if np.all(H == H[0]) and H[0] * su.harvest_rate > 1.0:
            theta[i], interior[i] = closed_form_theta(su, H[0], scenario.params, full_output=True)
        else:
            theta[i], interior[i] = per_su_theta_optimize(su, allocation[i], scenario.params,
                                                          full_output=True)
    return theta, tuple(interior)


def _rate_infeasible(scenario, allocation, theta_free, tol):
    # every user's rate peaks at its unconstrained optimum
    slacks = evaluate_constraints(scenario, allocation, theta_free)
    alloc = slacks.allocated_mask
    short = -slacks.rate[alloc] / slacks.rate_scale[alloc]
    return bool(short.size and short.max() > tol)


class _DualProblem:
    """The dualised problem restricted to the allocated users, as arrays."""

    def __init__(self, scenario, allocation):
        params = scenario.params
        self.T = params.slot_duration
        self.idx = np.array(allocation.allocated_users, dtype=int)
        users = [scenario.users[i] for i in self.idx]
        self.block = _Users(users, _gain_matrix(scenario, allocation)[self.idx], params)
        self.kappa = _interference_weights(scenario, allocation)[self.idx]
        self.thresholds = np.array([pu.interference_threshold for pu in scenario.pus])
        self.req = np.array([su.rate_requirement for su in users])
        self.rt = np.array([su.is_rt for su in users], dtype=bool)
        self.rate_scale = np.maximum(self.req, 1.0)
        self.floor = self.block.lo

    def set_rate_floor(self, peak):
        """Smallest theta meeting each rate requirement, by bisection on
        ``[lo, peak]`` where the rate increases; ``lo`` if the requirement is 0."""
        a = self.block.lo.copy()
        b = np.asarray(peak, dtype=float).copy()
        need = self.req > 0.0
        for _ in range(100):
            mid = 0.5 * (a + b)
            ok = self.block.rate(mid) >= self.req
            b = np.where(need & ok, mid, b)
            a = np.where(need & ~ok, mid, a)
        self.floor = np.where(need, b, self.block.lo)

    def nu_ceiling(self):
        """Per-PU multiplier above which every user feeding that PU sits at
        its rate floor; the dual optimum lies below it."""
        f = self.floor
        ratio = self.block.rate_slope(f) / self.block.power_slope(f)
        with np.errstate(divide="ignore"):
            per = np.where(self.kappa > 0.0, ratio[:, None] / self.kappa, 0.0)
        return np.maximum(per.max(axis=0, initial=0.0), 0.0)

    def _weights(self, nu):
        return self.kappa @ nu if nu.size else np.zeros(self.idx.size)

    def maximize(self, nu, start):
        """Lagrangian maximiser over the box ``[floor, hi]`` for PU multipliers ``nu``."""
        b = self.block
        w = self._weights(nu)
        x, _ = _maximize_concave(lambda th: b.rate_slope(th) - w * b.power_slope(th),
                                 lambda th: b.rate_curvature(th) - w * b.power_curvature(th),
                                 self.floor, b.hi, start=start)
        return x

    def _normalized_overload(self, nu_n, start):
        x = self.maximize(nu_n / self.thresholds, start)
        return self.overload(x) / self.thresholds

    def calibrate(self, x_free, cap, iterations=60):
        """Starting multipliers and per-PU step constants for ``c / t`` steps.

        Works in normalised units (multiplier times threshold, overload over
        threshold).  The dual function is convex, so its slope along the
        first subgradient ``d`` falls as we move out along ``nu = s * d``;
        bisection finds the ray minimiser, which becomes the starting point.
        Each PU's constant is the inverse slope of its own overload there,
        so the first step is close to a Newton step and later steps shrink
        as ``1 / t``.  PUs whose overload does not respond fall back to the
        ray's secant constant.  Returns raw ``(nu0, base)``.
        """
        thr = self.thresholds
        d = np.maximum(self.overload(x_free), 0.0) / thr
        if not d.any():
            return np.zeros_like(thr), 1.0 / thr ** 2
        cap_n = cap * thr
        with np.errstate(divide="ignore", invalid="ignore"):
            s_max = float(np.min(np.where(d > 0.0, cap_n / d, np.inf)))

        def ray_slope(s):
            return float(d @ self._normalized_overload(s * d, x_free))

        lo, hi = 0.0, min(1.0, s_max)
        while ray_slope(hi) > 0.0 and hi < s_max:
            lo, hi = hi, min(2.0 * hi, s_max)
        if ray_slope(hi) <= 0.0:
            for _ in range(iterations):
                mid = 0.5 * (lo + hi)
                if ray_slope(mid) > 0.0:
                    lo = mid
                else:
                    hi = mid
        nu0 = hi * d
        x0 = self.maximize(nu0 / thr, x_free)
        secant = hi
        const = np.full_like(thr, secant)
        for m in range(thr.size):
            delta = 1e-6 * (1.0 + nu0[m])
            up = nu0.copy()
            up[m] += delta
            down = nu0.copy()
            down[m] = max(nu0[m] - delta, 0.0)
            k = -(self._normalized_overload(up, x0)[m]
                  - self._normalized_overload(down, x0)[m]) / (up[m] - down[m])
            if k > 1e-12:
                const[m] = 1.0 / k
        return nu0 / thr, const / thr ** 2

    def box_multipliers(self, nu, x, rel=1e-9):
        """KKT multipliers of the box bounds at the Lagrangian maximiser.

        A user held at its lower bound has Lagrangian slope ``-r <= 0``; ``r``
        belongs to the rate requirement when the floor comes from it, to the
        energy constraint otherwise.  The upper bound is the time constraint.
        """
        b = self.block
        g = b.rate_slope(x) - self._weights(nu) * b.power_slope(x)
        span = b.hi - b.lo
        at_lo = x <= self.floor + rel * span
        at_hi = x >= b.hi - rel * span
        push = np.maximum(-g, 0.0)
        rate_floor = self.req > 0.0
        slope_rate = b.rate_slope(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(at_lo & rate_floor, push / slope_rate, 0.0)
        lam = np.where(at_lo & ~rate_floor, push / (b.chi * self.T), 0.0)
        mu = np.where(at_hi, np.maximum(g, 0.0) / self.T, 0.0)
        return lam, mu, np.nan_to_num(rho)

    def constraint_values(self, x):
        """(energy, time, interference, rate) constraint functions, each <= 0."""
        b = self.block
        h_lam = b.eps - b.chi * x * self.T
        h_mu = x * self.T + b.tau - self.T
        h_nu = b.power(x) @ self.kappa - self.thresholds
        h_rate = self.req - b.rate(x)
        return h_lam, h_mu, h_nu, h_rate

    def violation(self, x):
        h_lam, h_mu, h_nu, h_rate = self.constraint_values(x)
        parts = (h_lam / (self.block.chi * self.T), h_mu / self.T,
                 h_nu / self.thresholds if h_nu.size else h_nu, h_rate / self.rate_scale)
        return max(0.0, max(float(np.max(p, initial=-np.inf)) for p in parts))

    def overload(self, x):
        return self.block.power(x) @ self.kappa - self.thresholds

    def repair(self, x, rounds=5, points=33):
        """Pull the users feeding over-loaded PUs towards their rate floor by a
        common fraction until every interference constraint holds.

        Rates are concave, so every point between the floor and a
        rate-feasible ``x`` keeps its rate requirement.  Load falls as the
        fraction shrinks; the largest safe fraction is bracketed by ``rounds``
        vectorised scans of ``points`` fractions each.
        """
        x = np.maximum(x, self.floor)
        over = self.overload(x) > 0.0
        if not over.any():
            return x
        involved = (self.kappa[:, over] > 0.0).any(axis=1)
        base = self.floor
        span = np.where(involved, x - base, 0.0)
        lo_f, hi_f = 0.0, 1.0
        for _ in range(rounds):
            f = np.linspace(lo_f, hi_f, points)
            trial = base + f[:, None] * span
            trial = np.where(involved, trial, x)
            ok = np.all(self.block.power(trial) @ self.kappa <= self.thresholds, axis=1)
            k = int(np.flatnonzero(ok)[-1]) if ok.any() else 0
            lo_f, hi_f = f[k], f[min(k + 1, points - 1)]
        return np.where(involved, base + lo_f * span, x)


def dual_subgradient_solve(scenario, allocation, config=None):
    """Projected dual subgradient method on the harvesting ratios.

    Each iteration maximises the Lagrangian over every allocated user's
    theta (a concave 1-D problem per user, warm started) and then takes one
    projected step on the multipliers.  Stops when every multiplier moves
    less than ``tol_dual`` in objective units and the normalised primal
    violation is below ``tol_primal``.

    Iterates that overload a PU are also pulled back into the feasible set
    (see ``_DualProblem.repair``); the best feasible point seen, raw or
    repaired, is returned.  Without any feasible point the report is marked
    infeasible and not converged.
    """
    config = config or SolverConfig()
    K = scenario.num_users
    L = len(scenario.pus)
    theta = _default_thetas(scenario)
    zero = DualState.zeros(K, L, config.schedule)
    if not allocation.allocated_users:
        return SolveReport(theta, 0.0, 0, True, 0.0, METHOD_DUAL, duals=zero)

    theta_free, _ = unconstrained_thetas(scenario, allocation)
    if _rate_infeasible(scenario, allocation, theta_free, config.tol_primal):
        viol = evaluate_constraints(scenario, allocation, theta_free).normalized_violation()
        return SolveReport(theta_free, _objective(scenario, allocation, theta_free), 0, False,
                           viol, METHOD_DUAL, feasible=False, duals=zero,
                           message="rate requirement above the user's maximum rate")

    prob = _DualProblem(scenario, allocation)
    idx = prob.idx
    prob.set_rate_floor(theta_free[idx])
    if np.any(prob.overload(prob.floor) > config.tol_primal * prob.thresholds):
        # the floor has the least interference any rate-feasible point can have
        theta[idx] = prob.floor
        return SolveReport(theta, _objective(scenario, allocation, theta), 0, False,
                           prob.violation(prob.floor), METHOD_DUAL, feasible=False, duals=zero,
                           message="interference limits and rate requirements conflict")
    block = prob.block
    T = prob.T
    nu_cap = prob.nu_ceiling() if L else np.zeros(0)
    x = theta_free[idx].copy()
    schedule = config.schedule
    nu = np.zeros(L)
    if L and schedule.nu is None:
        nu, base_nu = prob.calibrate(x, nu_cap)
        schedule = replace(schedule, nu=base_nu * schedule.gain)
    b_nu = np.broadcast_to(np.asarray(schedule.nu, dtype=float), (L,))
    s_nu = prob.thresholds

    best = None
    converged = False
    x_avg = np.zeros_like(x)
    it = 0
    for it in range(1, config.max_iter + 1):
        x = prob.maximize(nu, x)
        x_avg += (x - x_avg) / it
        viol = prob.violation(x)
        for cand in (x, x_avg):
            obj = float(block.rate(cand).sum())
            if best is not None and obj <= best[0]:
                continue  # pulling towards the floor only lowers rates
            v = prob.violation(cand)
            if v > config.tol_primal:
                cand = prob.repair(cand)
                v = prob.violation(cand)
                obj = float(block.rate(cand).sum())
            if v <= config.tol_primal and (best is None or obj > best[0]):
                best = (obj, cand.copy(), v)

        step = schedule.step(b_nu, it)
        new_nu = np.clip(nu + step * prob.overload(x), 0.0, nu_cap)
        move = float(np.max(np.abs(new_nu - nu) * s_nu, initial=0.0))
        nu = new_nu
        if move < config.tol_dual and viol <= config.tol_primal:
            converged = True
            break

    full = {name: np.zeros(K) for name in ("lam", "mu", "rho_rt", "rho_nrt")}
    lam, mu, rho = prob.box_multipliers(nu, x)
    full["lam"][idx] = lam
    full["mu"][idx] = mu
    full["rho_rt"][idx] = np.where(prob.rt, rho, 0.0)
    full["rho_nrt"][idx] = np.where(prob.rt, 0.0, rho)
    duals = DualState(nu=nu, iteration=it, schedule=schedule, **full)

    if best is None:
        theta[idx] = x
        return SolveReport(theta, _objective(scenario, allocation, theta), it, False,
                           prob.violation(x), METHOD_DUAL, feasible=False, duals=duals,
                           message="no feasible iterate")
    obj, xb, viol = best
    theta[idx] = xb
    return SolveReport(theta, obj, it, converged, viol, METHOD_DUAL, duals=duals,
                       message="" if converged else "iteration cap reached")


def solve_closed_form(scenario, allocation, config=None):
    """Closed-form harvesting ratios, with a dual fallback.

    Users with a single effective gain get the exact Lambert-W expression;
    users with heterogeneous gains get the root of the summed first-order
    condition.  If the result violates the interference or rate constraints
    the dual subgradient method takes over.
    """
    config = config or SolverConfig()
    theta, interior = unconstrained_thetas(scenario, allocation)
    slacks = evaluate_constraints(scenario, allocation, theta)
    viol = slacks.normalized_violation()
    if viol <= config.tol_primal:
        return SolveReport(theta, _objective(scenario, allocation, theta), 1, True, viol,
                           METHOD_CLOSED, interior=interior)
    report = dual_subgradient_solve(scenario, allocation, config)
    return replace(report, fallback=True, interior=interior)
