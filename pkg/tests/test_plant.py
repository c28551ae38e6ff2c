import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plcmine.plant import (FlowModel, PlantConfig, TankPlant, config_from_dict,
                           config_to_dict, read_sensors)


def det_cfg(dt=0.1, seed=1):
    return PlantConfig(flow=FlowModel("deterministic", rate=9.0), dt=dt, seed=seed)


def sto_cfg(dt=0.1, seed=42):
    return PlantConfig(flow=FlowModel("stochastic", mean_rate=9.0, std_dev=2.0,
                                      leak_min=0.0, leak_max=0.5),
                       dt=dt, seed=seed)


def test_deterministic_fill_one_second():
    plant = TankPlant(det_cfg(dt=1.0), initial_level=50.0)
    state = plant.step(inv=True, outv=False)
    assert state.level == pytest.approx(59.0)


def test_deterministic_closed_valves_hold_level():
    plant = TankPlant(det_cfg(dt=1.0), initial_level=50.0)
    state = plant.step(inv=False, outv=False)
    assert state.level == pytest.approx(50.0)


def test_sensor_thresholds():
    cfg = det_cfg()
    assert read_sensors(90.0, cfg) == {"ULS": True, "MLS": True, "LLS": True}
    assert read_sensors(50.0, cfg) == {"ULS": False, "MLS": True, "LLS": True}
    assert read_sensors(5.0, cfg) == {"ULS": False, "MLS": False, "LLS": False}


def test_stochastic_closed_valve_drift_bound():
    # Each tick moves the level by at most (leak_max * dt) in either
    # direction, so 100 ticks stay within 100 * 0.1 * 0.5 = 5 gallons.
    # The exact drift is pinned against an independent recomputation of the
    # seeded stream (inlet draw first, outlet draw second, every tick).
    plant = TankPlant(sto_cfg(seed=42), initial_level=50.0)
    for _ in range(100):
        plant.step(inv=False, outv=False)
    delta = plant.state.level - 50.0
    assert abs(delta) <= 5.0

    rng = np.random.Generator(np.random.PCG64(42))
    level = 50.0
    for _ in range(100):
        leak_in = rng.uniform(0.0, 0.5)
        leak_out = rng.uniform(0.0, 0.5)
        level += (leak_in - leak_out) * 0.1
    assert plant.state.level == pytest.approx(level, abs=0)


def test_stochastic_seed_reproducibility():
    def trajectory(seed):
        plant = TankPlant(sto_cfg(seed=seed), initial_level=20.0)
        return [plant.step(inv=(i % 50 < 25), outv=(i % 50 >= 25)).level
                for i in range(300)]

    assert trajectory(7) == trajectory(7)
    assert trajectory(7) != trajectory(8)


def test_deterministic_bitwise_repeat():
    def run():
        plant = TankPlant(det_cfg())
        return [plant.step(inv=(i % 3 != 0), outv=(i % 3 == 0)).level
                for i in range(500)]

    assert run() == run()


def test_fill_timing_to_upper_sensor():
    cfg = det_cfg(dt=0.1)
    plant = TankPlant(cfg, initial_level=10.0)
    expect = math.ceil((90.0 - 10.0) / (9.0 * cfg.dt))
    ticks = 0
    while not plant.state.sensors["ULS"]:
        plant.step(inv=True, outv=False)
        ticks += 1
    assert ticks == expect


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=300),
       st.integers(0, 2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_level_always_clamped(valves, seed):
    plant = TankPlant(sto_cfg(seed=seed), initial_level=95.0)
    for inv, outv in valves:
        state = plant.step(inv, outv)
        assert 0.0 <= state.level <= plant.cfg.capacity


@given(st.floats(0, 100), st.floats(0, 100))
@settings(max_examples=100, deadline=None)
def test_sensor_monotonicity(a, b):
    cfg = det_cfg()
    lo, hi = min(a, b), max(a, b)
    s_lo, s_hi = read_sensors(lo, cfg), read_sensors(hi, cfg)
    for name in s_lo:
        if s_lo[name]:
            assert s_hi[name]


def test_config_validation():
    with pytest.raises(ValueError):
        PlantConfig(sensor_levels={"ULS": 50.0, "MLS": 90.0, "LLS": 10.0})
    with pytest.raises(ValueError):
        PlantConfig(dt=0.0)
    with pytest.raises(ValueError):
        PlantConfig(flow=FlowModel("stochastic", leak_min=1.0, leak_max=0.5))


def test_config_round_trip():
    for cfg in (det_cfg(), sto_cfg()):
        assert config_from_dict(config_to_dict(cfg)) == cfg
