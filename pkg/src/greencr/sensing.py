"""Cooperative sensing: fusion-centre decisions and sensing posteriors."""
from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, DomainError


def _check_prob(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
    return arr


def _ratio(num, den, what):
    if np.any(den <= 0.0):
        raise DegenerateInputError(f"{what}: denominator vanishes for these probabilities")
    out = num / den
    return float(out) if np.ndim(out) == 0 else out


def posterior_occupied(prior, miss, false_alarm):
    """Probability that a channel flagged busy by the fusion centre is really occupied.

    ``prior`` is the a-priori occupancy probability, ``miss`` and
    ``false_alarm`` are the fused miss-detection and false-alarm probabilities.
    Works elementwise on arrays.
    """
    q = _check_prob("prior", prior)
    qm = _check_prob("miss", miss)
    qf = _check_prob("false_alarm", false_alarm)
    num = q * (1.0 - qm)
    return _ratio(num, num + (1.0 - q) * qf, "posterior_occupied")


def posterior_missed(prior, miss, false_alarm):
    """Probability that a channel declared idle is in fact occupied."""
    q = _check_prob("prior", prior)
    qm = _check_prob("miss", miss)
    qf = _check_prob("false_alarm", false_alarm)
    num = q * qm
    return _ratio(num, num + (1.0 - q) * (1.0 - qf), "posterior_missed")


def posterior_idle_given_busy(prior, miss, false_alarm):
    """Complement of :func:`posterior_occupied`, computed with the roles swapped."""
    q = _check_prob("prior", prior)
    qm = _check_prob("miss", miss)
    qf = _check_prob("false_alarm", false_alarm)
    num = (1.0 - q) * qf
    return _ratio(num, num + q * (1.0 - qm), "posterior_idle_given_busy")


def at_least_k_probability(probs, k):
    """P(at least k of n independent Bernoulli(p_i) events), Poisson-binomial recursion."""
    p = _check_prob("probs", probs).ravel()
    n = p.size
    if n == 0:
        raise DomainError("need at least one detector")
    if not 1 <= k <= n:
        raise DomainError(f"k must satisfy 1 <= k <= {n}, got {k}")
    # dist[c] = P(exactly c successes among the detectors processed so far)
    dist = np.zeros(n + 1)
    dist[0] = 1.0
    for pi in p:
        dist[1:] = dist[1:] * (1.0 - pi) + dist[:-1] * pi
        dist[0] *= 1.0 - pi
    return float(min(1.0, dist[k:].sum()))


def fuse_k_out_of_n(detection, false_alarm, k):
    """Fuse local verdicts with the k-out-of-n rule.

    Parameters
    ----------
    detection, false_alarm : sequence of float
        Per-user local detection and false-alarm probabilities.
    k : int
        Number of "busy" votes needed to declare the channel busy.

    Returns
    -------
    (fused_miss, fused_false_alarm)
    """
    detection = np.atleast_1d(np.asarray(detection, dtype=float))
    false_alarm = np.atleast_1d(np.asarray(false_alarm, dtype=float))
    if detection.size == 0:
        raise DomainError("empty detector list")
    if detection.shape != false_alarm.shape:
        raise DomainError("detection and false_alarm lists differ in length")
    fused_pd = at_least_k_probability(detection, k)
    fused_pf = at_least_k_probability(false_alarm, k)
    return 1.0 - fused_pd, fused_pf
