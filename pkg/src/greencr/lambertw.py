"""Principal branch of the Lambert W function and the x ln x = a x + b solver."""
from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, NoSolutionError

BRANCH_POINT = -math.exp(-1.0)
_E = math.e


def _initial_guess(x):
    w = np.empty_like(x)
    near = x < -0.25
    # series about the branch point in p = sqrt(2 (e x + 1))
    p = np.sqrt(np.maximum(2.0 * (_E * x[near] + 1.0), 0.0))
    w[near] = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    rest = ~near
    # Winitzki's approximation, good to a few percent on [-0.25, inf)
    l1 = np.log1p(x[rest])
    w[rest] = l1 * (1.0 - np.log1p(l1) / (2.0 + l1))
    return w


def lambert_w0(x, max_iter=60):
    """Principal branch W0(x) for real ``x >= -1/e``.

    Halley iteration from a branch-aware start; accepts scalars or arrays.
    """
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    x = np.atleast_1d(arr).astype(float)
    if np.any(np.isnan(x)):
        raise DomainError("lambert_w0 of NaN")
    # one ulp of slack for -1/e rounded to double
    if np.any(x < BRANCH_POINT - 4e-17):
        raise DomainError(f"lambert_w0 is real only for x >= -1/e, got min {x.min()!r}")
    x = np.maximum(x, BRANCH_POINT)
    w = _initial_guess(x)
    w[x == 0.0] = 0.0
    w[np.isposinf(x)] = np.inf
    active = np.isfinite(w) & (x != 0.0) & (x != BRANCH_POINT)
    w[x == BRANCH_POINT] = -1.0
    for _ in range(max_iter):
        if not active.any():
            break
        wa = w[active]
        ew = np.exp(wa)
        f = wa * ew - x[active]
        wp1 = wa + 1.0
        denom = ew * wp1 - (wa + 2.0) * f / (2.0 * wp1)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(np.abs(wp1) < 1e-300, 0.0, f / denom)
        step = np.where(np.isfinite(step), step, 0.0)
        new = wa - step
        # stay on the principal branch
        new = np.maximum(new, -1.0)
        w[active] = new
        done = np.abs(step) <= 4e-16 * np.abs(new) + 1e-300
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return float(w[0]) if scalar else w


def solve_x_ln_x(a, b):
    """Positive root of ``x ln x = a x + b`` via ``x = b / W0(b e^{-a})``.

    For ``b = 0`` the root is ``e^a``.  When ``b < 0`` two roots exist; the
    larger one (principal branch) is returned.
    """
    a = float(a)
    b = float(b)
    if b == 0.0:
        return math.exp(a)
    z = b * math.exp(-a)
    if not math.isfinite(z):
        raise NoSolutionError(f"b*exp(-a) overflows for a={a!r}, b={b!r}")
    if z < BRANCH_POINT:
        raise NoSolutionError(f"x ln x = {a} x + {b} has no real solution (b e^-a < -1/e)")
    w = lambert_w0(z)
    if w == 0.0:
        # z underflowed relative to b; the root tends to e^a
        return math.exp(a)
    return b / w
