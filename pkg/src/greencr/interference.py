"""Out-of-band leakage of an OFDM sub-carrier into neighbouring sub-channels."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .quadrature import MAX_INTERVALS, adaptive_simpson
from .sensing import posterior_missed, posterior_occupied

QUAD_RTOL = 1e-8


def ofdm_psd(f, symbol_duration):
    """Power spectral density t * sinc^2(f t) of a rectangular OFDM symbol.

    Integrates to one over the whole frequency axis.
    """
    if not symbol_duration > 0.0:
        raise DomainError("symbol_duration must be > 0")
    f = np.asarray(f, dtype=float)
    out = symbol_duration * np.sinc(f * symbol_duration) ** 2
    return float(out) if out.ndim == 0 else out


def psd_integral(lo, hi, symbol_duration, rtol=QUAD_RTOL, max_intervals=MAX_INTERVALS):
    """Integral of :func:`ofdm_psd` over ``[lo, hi]`` (Hz)."""
    t = float(symbol_duration)
    # roughly eight starting intervals per spectral lobe
    lobes = abs(hi - lo) * t
    initial = int(min(max(16, 8 * math.ceil(lobes)), max_intervals // 4))
    return adaptive_simpson(lambda f: t * np.sinc(f * t) ** 2, lo, hi, rtol=rtol,
                            initial=initial, max_intervals=max_intervals)


@lru_cache(maxsize=4096)
def band_leakage(offset, bandwidth, symbol_duration, rtol=QUAD_RTOL):
    """Fraction of unit transmit power falling into the sub-channel ``offset``
    bands away from the transmitting one."""
    lo = (offset - 0.5) * bandwidth
    hi = (offset + 0.5) * bandwidth
    return psd_integral(lo, hi, symbol_duration, rtol=rtol)


def interference_factor(params, cross_gain, tx_subchannel, victim_subchannel):
    """Interference (W per W transmitted) landing in ``victim_subchannel`` when a
    user transmits on ``tx_subchannel`` through a link of power gain ``cross_gain``."""
    n = params.num_subchannels
    for j in (tx_subchannel, victim_subchannel):
        if not 0 <= j < n:
            raise DomainError(f"sub-channel index {j} outside 0..{n - 1}")
    if cross_gain < 0.0:
        raise DomainError("cross_gain must be >= 0")
    if cross_gain == 0.0:
        return 0.0
    offset = int(victim_subchannel) - int(tx_subchannel)
    return cross_gain * band_leakage(offset, params.bandwidth, params.symbol_duration)


def _posterior_weights(pu, sensing):
    weights = {}
    for j in pu.available:
        weights[j] = posterior_occupied(sensing.prior[j], sensing.miss[j], sensing.false_alarm[j])
    for j in pu.unavailable:
        weights[j] = posterior_missed(sensing.prior[j], sensing.miss[j], sensing.false_alarm[j])
    return weights


def weighted_interference(su, tx_subchannel, pu, sensing, params):
    """Expected interference at one primary user per watt sent on ``tx_subchannel``.

    Sub-channels of the PU band judged available are weighted by the
    busy-verdict posterior, the ones judged unavailable by the missed-detection
    posterior.
    """
    if tx_subchannel not in sensing.available:
        raise DomainError(f"sub-channel {tx_subchannel} is not in the available set")
    gain = float(su.cross_gains[tx_subchannel, pu.id])
    total = 0.0
    for j, w in sorted(_posterior_weights(pu, sensing).items()):
        if w:
            total += w * interference_factor(params, gain, tx_subchannel, j)
    return total


def interference_tensor(scenario):
    """``I[i, l, m]`` for every user, transmit sub-channel and primary user.

    Rows of unavailable transmit sub-channels are filled too; allocation never
    uses them.
    """
    params = scenario.params
    n = params.num_subchannels
    K = scenario.num_users
    L = len(scenario.pus)
    out = np.zeros((K, n, L))
    if K == 0 or L == 0:
        return out
    leak = np.array([band_leakage(d, params.bandwidth, params.symbol_duration)
                     for d in range(-(n - 1), n)])
    for pu in scenario.pus:
        weights = _posterior_weights(pu, scenario.sensing)
        # coupling[l] = sum_j w_j * leakage(j - l)
        coupling = np.zeros(n)
        for j, w in weights.items():
            coupling += w * leak[j - np.arange(n) + (n - 1)]
        for su in scenario.users:
            out[su.id, :, pu.id] = su.cross_gains[:, pu.id] * coupling
    return out
