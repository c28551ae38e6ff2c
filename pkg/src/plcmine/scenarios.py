"""The three benchmark scenarios and their seed discipline.

scenario1: deterministic plant, two-point level cycle program
scenario2: deterministic plant, counted batch program (preset 3)
scenario3: stochastic plant, counted batch program (preset 3)

The reset component is the bottom sensor dropping out ("%IX0.1_false") in all
three. One scenario seed drives everything: the plant noise stream uses the
seed itself, classifier weight initialization uses seed + 1000. Both streams
are numpy PCG64 generators.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ladder import (LadderProgram, build_counted_batch_program,
                     build_level_cycle_program)
from .plant import FlowModel, PlantConfig

RESET_COMPONENT = "%IX0.1_false"
DEFAULT_DURATION_S = 880.0
DEFAULT_DT_S = 0.1
TRAIN_SEED_OFFSET = 1000

SCENARIO_NAMES = ("scenario1", "scenario2", "scenario3")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    plant: PlantConfig
    program_kind: str  # "level_cycle" | "counted_batch"
    duration_s: float
    reset: str
    seed: int

    def build_program(self) -> LadderProgram:
        if self.program_kind == "level_cycle":
            return build_level_cycle_program()
        return build_counted_batch_program(3)

    @property
    def train_seed(self) -> int:
        return self.seed + TRAIN_SEED_OFFSET


def make_scenario(name: str, duration_s: float = DEFAULT_DURATION_S,
                  dt: float = DEFAULT_DT_S, seed: int = 42) -> ScenarioSpec:
    if name not in SCENARIO_NAMES:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")
    if name == "scenario3":
        flow = FlowModel("stochastic", mean_rate=9.0, std_dev=2.0,
                         leak_min=0.0, leak_max=0.5)
    else:
        flow = FlowModel("deterministic", rate=9.0)
    plant = PlantConfig(capacity=100.0,
                        sensor_levels={"ULS": 90.0, "MLS": 50.0, "LLS": 10.0},
                        flow=flow, dt=dt, seed=seed)
    program_kind = "level_cycle" if name == "scenario1" else "counted_batch"
    return ScenarioSpec(name=name, plant=plant, program_kind=program_kind,
                        duration_s=duration_s, reset=RESET_COMPONENT, seed=seed)
