import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greencr.errors import ConfigError
from greencr.model import TrafficClass
from greencr.scenario import (ScenarioConfig, apply_overrides, available_subchannels, draw_user,
                              format_config, generate_scenario, parse_config_text,
                              parse_quantity, pu_bands, read_config, read_scenario,
                              scenario_from_dict, scenario_to_dict, with_thresholds,
                              write_config, write_scenario)


@pytest.mark.parametrize("text, value", [
    ("1 ms", 1e-3), ("10 us", 1e-5), ("10 µs", 1e-5), ("1 mJ", 1e-3), ("62.5 kHz", 62.5e3),
    ("5", 5.0), ("-30 dBm", 1e-6), ("2.5e-13 W", 2.5e-13), ("3 J/s", 3.0),
])
def test_parse_quantity(text, value):
    assert parse_quantity(text) == pytest.approx(value, rel=1e-15)


def test_units_are_exact_decimal_scaling():
    assert parse_quantity("10 us") == 1e-5
    assert parse_quantity("0.1 ms") == 1e-4


def test_parse_errors_carry_line():
    with pytest.raises(ConfigError):
        parse_quantity("fast")
    with pytest.raises(ConfigError):
        parse_quantity("3 parsecs")
    with pytest.raises(ConfigError) as info:
        parse_config_text("seed = 2\nnot_a_key = 1\n")
    assert "2" in str(info.value)
    with pytest.raises(ConfigError):
        parse_config_text("seed 2")


def test_config_text_and_overrides():
    cfg = parse_config_text("""
        # comment line
        seed = 7
        slot_duration = 2 ms
        harvest_rate = 1, 3 , 9   # trailing comment
        fading = none
    """)
    assert cfg.seed == 7 and cfg.slot_duration == 2e-3
    assert cfg.harvest_rate == (1.0, 3.0, 9.0) and cfg.fading == "none"
    cfg2 = apply_overrides(cfg, ["seed=9", "sensing_time = 5 us"])
    assert cfg2.seed == 9 and cfg2.sensing_time == (5e-6,) and cfg2.slot_duration == 2e-3


def test_config_round_trip(tmp_path):
    cfg = ScenarioConfig(seed=123, harvest_rate=(0.1, 2.5, 1e-7), sensing_time=(10e-6,),
                         interference_threshold=5e-13, fading="per_user", noise_psd=1.6e-18)
    path = tmp_path / "c.cfg"
    write_config(cfg, path)
    back = read_config(path)
    assert back == cfg
    assert format_config(back) == path.read_text(encoding="utf-8")
    assert back.config_hash() == cfg.config_hash()


@settings(max_examples=50)
@given(st.floats(1e-20, 1e6, allow_nan=False), st.integers(0, 2 ** 63 - 1))
def test_round_trip_property(x, seed):
    cfg = ScenarioConfig(seed=seed, interference_threshold=x, harvest_rate=(x,))
    assert parse_config_text(format_config(cfg)) == cfg


def test_validation():
    with pytest.raises(ConfigError):
        generate_scenario(ScenarioConfig(num_rt=5, num_users=4))
    with pytest.raises(ConfigError):
        generate_scenario(ScenarioConfig(num_available=20, num_subchannels=16))
    with pytest.raises(ConfigError):
        generate_scenario(ScenarioConfig(distance_min=300.0, distance_max=200.0))
    with pytest.raises(ConfigError):
        generate_scenario(ScenarioConfig(fading="lognormal"))


def test_hash_changes_with_content():
    a = ScenarioConfig()
    assert a.config_hash() == ScenarioConfig().config_hash()
    assert a.config_hash() != a.with_overrides(seed=2).config_hash()


def _bytes(sc):
    return repr(scenario_to_dict(sc))


def test_deterministic_under_seed():
    cfg = ScenarioConfig(seed=42, num_users=5, num_rt=2, fusion_k=3)
    assert _bytes(generate_scenario(cfg)) == _bytes(generate_scenario(cfg))
    assert _bytes(generate_scenario(cfg)) != _bytes(generate_scenario(cfg.with_overrides(seed=43)))


def test_user_draws_independent_of_user_count():
    small = generate_scenario(ScenarioConfig(seed=3, num_users=2, num_rt=1))
    large = generate_scenario(ScenarioConfig(seed=3, num_users=6, num_rt=1))
    for i in range(2):
        assert np.array_equal(small.users[i].gains, large.users[i].gains)


def test_nested_available_sets():
    base = ScenarioConfig(seed=5, num_subchannels=32)
    prev = set()
    for m in range(4, 33, 4):
        cur = set(available_subchannels(base.with_overrides(num_available=m)))
        assert len(cur) == m and prev <= cur
        prev = cur


def test_distance_mean():
    cfg = ScenarioConfig(seed=9, num_subchannels=1, num_available=1, num_pus=0, fading="none")
    beta = cfg.path_loss_exponent
    d = np.array([draw_user(cfg, i).gains[0] ** (-1.0 / (2 * beta)) for i in range(10_000)])
    assert d.min() >= 50.0 - 1e-9 and d.max() <= 200.0 + 1e-9
    assert abs(d.mean() - 125.0) / 125.0 <= 0.02


def test_rayleigh_gain_statistics():
    cfg = ScenarioConfig(seed=4, num_users=1, num_rt=0, num_subchannels=20_000, num_available=1,
                         num_pus=0, distance_min=100.0, distance_max=100.0)
    g = draw_user(cfg, 0).gains * 100.0 ** 6
    # |Y|^2 is exponential with mean 2 sigma^2
    assert g.mean() == pytest.approx(2.0, rel=0.03)


def test_traffic_classes_and_lists():
    cfg = ScenarioConfig(seed=1, num_users=4, num_rt=2, harvest_rate=(1.0, 2.0),
                         rate_requirement=(3.0,), nrt_rate_requirement=(0.5,))
    sc = generate_scenario(cfg)
    assert [u.traffic for u in sc.users] == [TrafficClass.RT] * 2 + [TrafficClass.NRT] * 2
    assert [u.harvest_rate for u in sc.users] == [1.0, 2.0, 1.0, 2.0]
    assert [u.rate_requirement for u in sc.users] == [3.0, 3.0, 0.5, 0.5]


def test_harvest_spread():
    cfg = ScenarioConfig(seed=1, num_users=50, num_rt=0, harvest_rate=(3.0,),
                         harvest_rate_spread=0.2)
    chis = [u.harvest_rate for u in generate_scenario(cfg).users]
    assert min(chis) >= 2.4 and max(chis) <= 3.6 and len(set(chis)) == 50


def test_pu_bands_partition():
    bands = pu_bands(10, 3)
    assert sorted(j for b in bands for j in b) == list(range(10))
    assert pu_bands(10, 0) == []


def test_fusion_sensing_probabilities():
    sc = generate_scenario(ScenarioConfig(seed=2, num_users=5, fusion_k=3))
    s = sc.sensing
    assert np.all((0 <= s.miss) & (s.miss <= 1)) and np.all((0 <= s.false_alarm) & (s.false_alarm <= 1))


def test_scenario_file_round_trip(tmp_path):
    sc = generate_scenario(ScenarioConfig(seed=8, num_users=3, num_rt=1, num_available=10))
    path = tmp_path / "s.json"
    write_scenario(sc, path)
    back = read_scenario(path)
    assert _bytes(back) == _bytes(sc)
    assert np.array_equal(back.interference, sc.interference)
    again = scenario_from_dict(scenario_to_dict(sc))
    assert _bytes(again) == _bytes(sc)


def test_bad_scenario_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_scenario(path)


def test_with_thresholds():
    sc = generate_scenario(ScenarioConfig(seed=1))
    t = with_thresholds(sc, 7e-14)
    assert all(pu.interference_threshold == 7e-14 for pu in t.pus)
    assert t.users is sc.users
