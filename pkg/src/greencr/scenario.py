"""Scenario configuration, random scenario generation and scenario files.

Configuration files are flat ``key = value`` text.  Values may carry a unit
suffix (``1 ms``, ``10 us``, ``1 mJ``, ``62.5 kHz``, ``-100 dBm``), which is
normalised to SI on read; lists are comma separated.  ``#`` starts a comment.

Randomness: every draw comes from a PCG64 generator seeded with
``SeedSequence([seed, stream, index])``, where ``stream`` names the kind of
draw (user channels, sensing, availability, ...) and ``index`` is the user
id (0 for scenario-wide streams).  A user's draws therefore do not depend on
how many other users exist.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from decimal import Decimal
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import (PrimaryUser, Scenario, SecondaryUser, SensingModel, SystemParams,
                    TrafficClass, snr_gap)
from .sensing import fuse_k_out_of_n

FADING_CHOICES = ("per_subchannel", "per_user", "none")

# stream tags for SeedSequence
STREAM_USER = 1
STREAM_CROSS = 2
STREAM_SENSING = 3
STREAM_AVAILABLE = 4
STREAM_TRAFFIC = 5
STREAM_FUSION = 6


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to draw one scenario deterministically.

    Per-user lists are cycled over the users (a single value applies to all).
    ``harvest_rate_spread`` > 0 draws each user's rate uniformly in
    ``chi * (1 +- spread)`` around its listed value.
    """

    seed: int = 1
    num_users: int = 4
    num_rt: int = 2
    num_pus: int = 4
    num_subchannels: int = 16
    num_available: int = 16

    slot_duration: float = 1e-3
    bandwidth: float = 62.5e3
    noise_psd: float = 1.6e-18
    ber: float = 1e-3
    symbol_duration: float = 16e-6
    start_frequency: float = 915e6

    harvest_rate: tuple = (5.0,)
    harvest_rate_spread: float = 0.0
    sensing_energy: tuple = (1e-3,)
    sensing_time: tuple = (10e-6,)
    rate_requirement: tuple = (0.0,)
    nrt_rate_requirement: tuple = (0.0,)
    pu_interference: float = 0.0

    path_loss_exponent: float = 3.0
    distance_min: float = 50.0
    distance_max: float = 200.0
    pu_distance_min: float = 200.0
    pu_distance_max: float = 300.0
    rayleigh_scale: float = 1.0
    fading: str = "per_subchannel"

    prior_min: float = 0.0
    prior_max: float = 1.0
    miss_min: float = 0.01
    miss_max: float = 0.05
    false_alarm_min: float = 0.05
    false_alarm_max: float = 0.1
    detection_min: float = -1.0
    detection_max: float = -1.0
    fusion_k: int = 0

    interference_threshold: float = 5e-13

    def __post_init__(self):
        for name in ("harvest_rate", "sensing_energy", "sensing_time", "rate_requirement",
                     "nrt_rate_requirement"):
            value = getattr(self, name)
            if np.ndim(value) == 0:
                value = (value,)
            object.__setattr__(self, name, tuple(float(v) for v in value))
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.num_users >= 1, "num_users must be >= 1")
        need(0 <= self.num_rt <= self.num_users, "num_rt must lie in [0, num_users]")
        need(self.num_pus >= 0, "num_pus must be >= 0")
        need(self.num_subchannels >= 1, "num_subchannels must be >= 1")
        need(1 <= self.num_available <= self.num_subchannels,
             "num_available must lie in [1, num_subchannels]")
        need(self.num_pus <= self.num_subchannels, "more PUs than sub-channels")
        need(0.0 < self.ber < 0.2, "ber must lie in (0, 0.2)")
        for name in ("harvest_rate", "sensing_time"):
            need(len(getattr(self, name)) >= 1 and min(getattr(self, name)) > 0.0,
                 f"{name} values must be > 0")
        for name in ("sensing_energy", "rate_requirement", "nrt_rate_requirement"):
            need(len(getattr(self, name)) >= 1 and min(getattr(self, name)) >= 0.0,
                 f"{name} values must be >= 0")
        need(0.0 <= self.harvest_rate_spread < 1.0, "harvest_rate_spread must lie in [0, 1)")
        need(0.0 < self.distance_min <= self.distance_max, "invalid distance range")
        need(0.0 < self.pu_distance_min <= self.pu_distance_max, "invalid PU distance range")
        need(self.rayleigh_scale > 0.0, "rayleigh_scale must be > 0")
        need(self.fading in FADING_CHOICES, f"fading must be one of {FADING_CHOICES}")
        for lo, hi in (("prior_min", "prior_max"), ("miss_min", "miss_max"),
                       ("false_alarm_min", "false_alarm_max")):
            a, b = getattr(self, lo), getattr(self, hi)
            need(0.0 <= a <= b <= 1.0, f"{lo}/{hi} must satisfy 0 <= min <= max <= 1")
        if self.detection_min >= 0.0 or self.detection_max >= 0.0:
            need(0.0 <= self.detection_min <= self.detection_max <= 1.0,
                 "detection_min/detection_max must satisfy 0 <= min <= max <= 1")
        need(self.fusion_k >= 0, "fusion_k must be >= 0")
        need(self.fusion_k <= self.num_users, "fusion_k cannot exceed num_users")
        need(self.interference_threshold > 0.0, "interference_threshold must be > 0")
        need(self.num_pus == 0 or self.num_pus >= 1, "num_pus must be >= 0")

    @property
    def uses_detection_range(self):
        return self.detection_min >= 0.0

    def system_params(self):
        return SystemParams(
            slot_duration=self.slot_duration,
            bandwidth=self.bandwidth,
            noise_psd=self.noise_psd,
            snr_gap=snr_gap(self.ber),
            symbol_duration=self.symbol_duration,
            start_frequency=self.start_frequency,
            num_subchannels=self.num_subchannels,
        )

    def with_overrides(self, **changes):
        return dataclasses.replace(self, **changes)

    def config_hash(self):
        return hashlib.sha256(format_config(self).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# config text format

_UNITS = {
    "s": "1", "ms": "1e-3", "us": "1e-6", "µs": "1e-6", "ns": "1e-9",
    "j": "1", "mj": "1e-3", "uj": "1e-6", "µj": "1e-6",
    "j/s": "1", "mj/s": "1e-3",
    "hz": "1", "khz": "1e3", "mhz": "1e6", "ghz": "1e9",
    "w": "1", "mw": "1e-3", "uw": "1e-6", "µw": "1e-6",
    "w/hz": "1",
    "m": "1", "km": "1e3",
    "bps/hz": "1",
}
_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf)\s*(\S*)\s*$")


def parse_quantity(text, line=None):
    """Parse ``"1 ms"`` -> 0.001.  Plain numbers are returned as floats."""
    m = _NUMBER.match(text)
    if not m:
        raise ConfigError(f"cannot parse number {text!r}", line=line)
    number = m.group(1)
    value = float(number)
    unit = m.group(2)
    if not unit:
        return value
    key = unit.lower()
    if key == "dbm":
        return 10.0 ** ((value - 30.0) / 10.0)
    if key == "dbw":
        return 10.0 ** (value / 10.0)
    if key not in _UNITS:
        raise ConfigError(f"unknown unit {unit!r}", line=line)
    if not math.isfinite(value):
        return value * float(_UNITS[key])
    # scale in decimal so "10 us" is exactly the double nearest 1e-5
    return float(Decimal(number) * Decimal(_UNITS[key]))


def _field_kinds():
    kinds = {}
    for f in fields(ScenarioConfig):
        default = f.default if f.default is not dataclasses.MISSING else None
        if isinstance(default, bool):
            kinds[f.name] = bool
        elif isinstance(default, int):
            kinds[f.name] = int
        elif isinstance(default, float):
            kinds[f.name] = float
        elif isinstance(default, tuple):
            kinds[f.name] = tuple
        else:
            kinds[f.name] = str
    return kinds


FIELD_KINDS = _field_kinds()


def parse_value(key, text, line=None):
    """Convert the text of one config entry to the field's type."""
    if key not in FIELD_KINDS:
        raise ConfigError(f"unknown key {key!r}", line=line)
    kind = FIELD_KINDS[key]
    text = text.strip()
    if kind is int:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {text!r}", line=line) from None
    if kind is float:
        return parse_quantity(text, line)
    if kind is tuple:
        parts = [p for p in text.split(",") if p.strip()]
        if not parts:
            raise ConfigError(f"{key}: empty list", line=line)
        return tuple(parse_quantity(p, line) for p in parts)
    return text


def parse_config_text(text, base=None):
    """Apply the entries of a config text on top of ``base`` (defaults if None)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in stripped.split("=", 1))
        if not key:
            raise ConfigError("missing key", line=lineno)
        values[key] = parse_value(key, value, lineno)
    base = base or ScenarioConfig()
    try:
        return dataclasses.replace(base, **values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def apply_overrides(config, overrides):
    """Apply ``["key=value", ...]`` overrides (same syntax as the file)."""
    text = "\n".join(overrides)
    return parse_config_text(text, base=config)


def read_config(path):
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _format_value(value):
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(config):
    return "".join(f"{f.name} = {_format_value(getattr(config, f.name))}\n"
                   for f in fields(config))


def write_config(config, path):
    Path(path).write_text(format_config(config), encoding="utf-8")


# --------------------------------------------------------------------------
# generation


def _rng(seed, stream, index=0):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) % 2**64,
                                                                         stream, index])))


def _cycle(values, i):
    return values[i % len(values)]


def _power_gains(rng, shape, d, beta, scale, fading):
    """Power gains |Y d^-beta|^2 with Rayleigh Y."""
    if fading == "none":
        y = np.ones(shape)
    elif fading == "per_user":
        y = np.full(shape, rng.rayleigh(scale))
    else:
        y = rng.rayleigh(scale, size=shape)
    return (y * np.asarray(d, dtype=float) ** (-beta)) ** 2


def pu_bands(num_subchannels, num_pus):
    """Contiguous, near-equal blocks of sub-channel indices, one per PU."""
    if num_pus == 0:
        return []
    edges = np.linspace(0, num_subchannels, num_pus + 1).round().astype(int)
    return [tuple(range(edges[m], edges[m + 1])) for m in range(num_pus)]


def available_subchannels(config):
    """The first ``num_available`` entries of a seeded permutation.

    Sweeping ``num_available`` with a fixed seed yields nested sets.
    """
    order = _rng(config.seed, STREAM_AVAILABLE).permutation(config.num_subchannels)
    return tuple(sorted(int(j) for j in order[:config.num_available]))


def _draw_sensing(config, available):
    rng = _rng(config.seed, STREAM_SENSING)
    n = config.num_subchannels
    prior = rng.uniform(config.prior_min, config.prior_max, size=n)
    if config.fusion_k > 0:
        frng = _rng(config.seed, STREAM_FUSION)
        miss = np.empty(n)
        fa = np.empty(n)
        for j in range(n):
            pm = _local_miss(frng, config, config.num_users)
            pf = frng.uniform(config.false_alarm_min, config.false_alarm_max,
                              size=config.num_users)
            miss[j], fa[j] = fuse_k_out_of_n(1.0 - pm, pf, config.fusion_k)
    else:
        miss = _local_miss(rng, config, n)
        fa = rng.uniform(config.false_alarm_min, config.false_alarm_max, size=n)
    return SensingModel(prior, miss, fa, available)


def _local_miss(rng, config, size):
    if config.uses_detection_range:
        return 1.0 - rng.uniform(config.detection_min, config.detection_max, size=size)
    return rng.uniform(config.miss_min, config.miss_max, size=size)


def draw_user(config, i):
    """Secondary user ``i``; RT users come first (ids ``0 .. num_rt-1``)."""
    n = config.num_subchannels
    rng = _rng(config.seed, STREAM_USER, i)
    d = rng.uniform(config.distance_min, config.distance_max)
    gains = _power_gains(rng, n, d, config.path_loss_exponent, config.rayleigh_scale,
                         config.fading)
    crng = _rng(config.seed, STREAM_CROSS, i)
    L = config.num_pus
    d_pu = crng.uniform(config.pu_distance_min, config.pu_distance_max, size=L)
    cross = _power_gains(crng, (n, L), d_pu[None, :], config.path_loss_exponent,
                         config.rayleigh_scale, config.fading) if L else np.zeros((n, 0))
    is_rt = i < config.num_rt
    chi = _cycle(config.harvest_rate, i)
    if config.harvest_rate_spread > 0.0:
        s = config.harvest_rate_spread
        chi = float(_rng(config.seed, STREAM_TRAFFIC, i).uniform(chi * (1 - s), chi * (1 + s)))
    if is_rt:
        req = _cycle(config.rate_requirement, i)
    else:
        req = _cycle(config.nrt_rate_requirement, i - config.num_rt)
    return SecondaryUser(
        id=i,
        traffic=TrafficClass.RT if is_rt else TrafficClass.NRT,
        harvest_rate=float(chi),
        sensing_energy=_cycle(config.sensing_energy, i),
        sensing_time=_cycle(config.sensing_time, i),
        rate_requirement=float(req),
        gains=gains,
        cross_gains=cross,
        pu_interference=config.pu_interference,
    )


def generate_scenario(config):
    """Draw a full scenario: users, PU bands, sensing model and available set."""
    config.validate()
    params = config.system_params()
    available = available_subchannels(config)
    avail = set(available)
    pus = tuple(
        PrimaryUser(m, config.interference_threshold,
                    available=frozenset(j for j in band if j in avail),
                    unavailable=frozenset(j for j in band if j not in avail))
        for m, band in enumerate(pu_bands(config.num_subchannels, config.num_pus))
    )
    users = tuple(draw_user(config, i) for i in range(config.num_users))
    return Scenario(params, users, pus, _draw_sensing(config, available))


# --------------------------------------------------------------------------
# scenario files (JSON)


def scenario_to_dict(scenario):
    p = scenario.params
    return {
        "params": dataclasses.asdict(p),
        "users": [
            {
                "id": su.id,
                "traffic": su.traffic.value,
                "harvest_rate": su.harvest_rate,
                "sensing_energy": su.sensing_energy,
                "sensing_time": su.sensing_time,
                "rate_requirement": su.rate_requirement,
                "pu_interference": su.pu_interference,
                "gains": su.gains.tolist(),
                "cross_gains": su.cross_gains.tolist(),
            }
            for su in scenario.users
        ],
        "pus": [
            {
                "id": pu.id,
                "interference_threshold": pu.interference_threshold,
                "available": sorted(pu.available),
                "unavailable": sorted(pu.unavailable),
            }
            for pu in scenario.pus
        ],
        "sensing": {
            "prior": scenario.sensing.prior.tolist(),
            "miss": scenario.sensing.miss.tolist(),
            "false_alarm": scenario.sensing.false_alarm.tolist(),
            "available": list(scenario.sensing.available),
        },
    }


def scenario_from_dict(data):
    try:
        params = SystemParams(**data["params"])
        n = params.num_subchannels
        L = len(data["pus"])
        users = tuple(
            SecondaryUser(
                id=u["id"], traffic=u["traffic"], harvest_rate=u["harvest_rate"],
                sensing_energy=u["sensing_energy"], sensing_time=u["sensing_time"],
                rate_requirement=u["rate_requirement"],
                pu_interference=u.get("pu_interference", 0.0),
                gains=u["gains"],
                cross_gains=np.asarray(u["cross_gains"], dtype=float).reshape(n, L),
            )
            for u in data["users"]
        )
        pus = tuple(PrimaryUser(p["id"], p["interference_threshold"],
                                frozenset(p["available"]), frozenset(p["unavailable"]))
                    for p in data["pus"])
        s = data["sensing"]
        sensing = SensingModel(s["prior"], s["miss"], s["false_alarm"], tuple(s["available"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed scenario file: {exc!r}") from exc
    return Scenario(params, users, pus, sensing)


def write_scenario(scenario, path):
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=1) + "\n",
                          encoding="utf-8")


def read_scenario(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file is not valid JSON: {exc.msg}", line=exc.lineno) from exc
    return scenario_from_dict(data)


def with_thresholds(scenario, threshold):
    """Same scenario with every PU's interference threshold set to ``threshold``."""
    pus = tuple(dataclasses.replace(pu, interference_threshold=threshold) for pu in scenario.pus)
    return Scenario(scenario.params, scenario.users, pus, scenario.sensing)

