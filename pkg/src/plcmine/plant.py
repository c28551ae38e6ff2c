"""Discrete-time tank plant with binary level sensors and binary valves.

Two flow models: a deterministic plant (fixed gallons-per-second rate through
an open valve, closed valves are tight) and a stochastic one (open-valve rate
drawn from a normal distribution each tick, closed valves leak a uniform
draw). Sensors read true iff the level is at or above their threshold.

All randomness comes from a numpy PCG64 generator seeded from the config; the
draw order is fixed (inlet first, outlet second, every tick) so trajectories
are bitwise reproducible for a given seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

RNG_ALGORITHM = "numpy-PCG64"

SENSOR_NAMES = ("ULS", "MLS", "LLS")


@dataclass(frozen=True)
class FlowModel:
    kind: str  # "deterministic" | "stochastic"
    rate: float = 9.0           # deterministic open-valve rate, gal/s
    mean_rate: float = 9.0      # stochastic open-valve mean, gal/s
    std_dev: float = 2.0        # stochastic open-valve stddev, gal/s
    leak_min: float = 0.0       # closed-valve leak bounds, gal/s
    leak_max: float = 0.5


@dataclass(frozen=True)
class PlantConfig:
    capacity: float = 100.0
    sensor_levels: dict | None = None  # {"ULS": 90, "MLS": 50, "LLS": 10}
    flow: FlowModel = FlowModel("deterministic")
    dt: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.sensor_levels is None:
            object.__setattr__(self, "sensor_levels",
                               {"ULS": 90.0, "MLS": 50.0, "LLS": 10.0})
        lv = self.sensor_levels
        if not 0 < lv["LLS"] < lv["MLS"] < lv["ULS"] < self.capacity:
            raise ValueError("sensor levels must satisfy 0 < LLS < MLS < ULS < capacity")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        f = self.flow
        if f.kind == "stochastic":
            if f.std_dev < 0 or not 0 <= f.leak_min <= f.leak_max:
                raise ValueError("bad stochastic flow parameters")
        elif f.kind != "deterministic":
            raise ValueError(f"unknown flow model {f.kind!r}")


@dataclass(frozen=True)
class PlantState:
    level: float
    tick: int
    sensors: dict  # name -> bool
    actuators: dict  # {"inv": bool, "outv": bool}


def read_sensors(level: float, cfg: PlantConfig) -> dict:
    """Each sensor reads true iff the level reaches its threshold (inclusive)."""
    return {name: level >= cfg.sensor_levels[name] for name in SENSOR_NAMES}


class TankPlant:
    """Owns the level, the tick counter, and the seeded noise stream."""

    def __init__(self, cfg: PlantConfig, initial_level: float = 0.0):
        self.cfg = cfg
        self.rng = np.random.Generator(np.random.PCG64(cfg.seed))
        self.state = PlantState(
            level=float(initial_level),
            tick=0,
            sensors=read_sensors(initial_level, cfg),
            actuators={"inv": False, "outv": False},
        )

    def _valve_flow(self, is_open: bool) -> float:
        f = self.cfg.flow
        if f.kind == "deterministic":
            return f.rate if is_open else 0.0
        # Stochastic: one draw per valve per tick, open or closed, so the
        # stream position depends only on the tick count.
        if is_open:
            return max(0.0, self.rng.normal(f.mean_rate, f.std_dev))
        return self.rng.uniform(f.leak_min, f.leak_max)

    def step(self, inv: bool, outv: bool) -> PlantState:
        """Advance one tick with the given valve commands; returns the new state.

        A closed inlet leaks inward and a closed outlet leaks outward (the
        stochastic model only); the level is clamped to [0, capacity].
        """
        cfg = self.cfg
        in_flow = self._valve_flow(inv)
        out_flow = self._valve_flow(outv)
        level = self.state.level + (in_flow - out_flow) * cfg.dt
        level = min(max(level, 0.0), cfg.capacity)
        self.state = PlantState(
            level=level,
            tick=self.state.tick + 1,
            sensors=read_sensors(level, cfg),
            actuators={"inv": bool(inv), "outv": bool(outv)},
        )
        return self.state

    def sensors(self) -> dict:
        return dict(self.state.sensors)


# -- trajectory export ---------------------------------------------------------

TRAJECTORY_HEADER = ["tick", "time_s", "level", "ULS", "MLS", "LLS", "inv", "outv"]


def write_trajectory(rows: Iterable[dict], path, dt: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for r in rows:
            w.writerow([
                r["tick"],
                f"{r['tick'] * dt:.1f}",
                f"{r['level']:.6f}",
                int(r["ULS"]), int(r["MLS"]), int(r["LLS"]),
                int(r["inv"]), int(r["outv"]),
            ])


def read_trajectory(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({
                "tick": int(row["tick"]),
                "time_s": float(row["time_s"]),
                "level": float(row["level"]),
                "ULS": bool(int(row["ULS"])),
                "MLS": bool(int(row["MLS"])),
                "LLS": bool(int(row["LLS"])),
                "inv": bool(int(row["inv"])),
                "outv": bool(int(row["outv"])),
            })
    return out


# -- config file ---------------------------------------------------------------

def config_to_dict(cfg: PlantConfig) -> dict:
    f = cfg.flow
    if f.kind == "deterministic":
        flow = {"kind": f.kind, "rate": f.rate}
    else:
        flow = {"kind": f.kind, "meanRate": f.mean_rate, "stdDev": f.std_dev,
                "leakMin": f.leak_min, "leakMax": f.leak_max}
    return {
        "capacity": cfg.capacity,
        "sensorLevels": dict(cfg.sensor_levels),
        "flowModel": flow,
        "dt": cfg.dt,
        "seed": cfg.seed,
    }


def config_from_dict(data: dict) -> PlantConfig:
    fm = data["flowModel"]
    if fm["kind"] == "deterministic":
        flow = FlowModel("deterministic", rate=fm["rate"])
    else:
        flow = FlowModel("stochastic", mean_rate=fm["meanRate"], std_dev=fm["stdDev"],
                         leak_min=fm["leakMin"], leak_max=fm["leakMax"])
    return PlantConfig(
        capacity=data["capacity"],
        sensor_levels=dict(data["sensorLevels"]),
        flow=flow,
        dt=data["dt"],
        seed=data["seed"],
    )


def write_config(cfg: PlantConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_config(path) -> PlantConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def with_seed(cfg: PlantConfig, seed: int) -> PlantConfig:
    return replace(cfg, seed=seed)
