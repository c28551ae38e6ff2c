"""Session-scoped pipeline artifacts shared across the test modules.

The three benchmark scenarios are recorded once per session; everything else
(nets, models, substituted runs) derives from them deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import pytest

from plcmine.controller import ClosedLoopRun, run_substituted
from plcmine.discovery import DiscoveryConfig, discover_net
from plcmine.ladder import run_closed_loop
from plcmine.logs import EventLog, reduce_log, split_traces
from plcmine.petri import LabeledPetriNet
from plcmine.predictor import (DecayConfig, NextActivityModel, TrainConfig,
                               estimate_horizons, sample_log, train)
from plcmine.scenarios import ScenarioSpec, make_scenario

SEED = 42


@dataclass
class ScenarioArtifacts:
    spec: ScenarioSpec
    io_samples: list
    trajectory: list
    elog: EventLog
    net: LabeledPetriNet
    model: NextActivityModel | None = None
    decay: DecayConfig | None = None
    substituted: ClosedLoopRun | None = None


def _build(name: str, with_model: bool) -> ScenarioArtifacts:
    spec = make_scenario(name, seed=SEED)
    io_samples, trajectory = run_closed_loop(
        spec.build_program(), spec.plant, spec.duration_s)
    elog = split_traces(reduce_log(io_samples), spec.reset, {
        "scenario": name, "duration_s": spec.duration_s, "dt_s": spec.plant.dt,
    })
    net = discover_net(elog, DiscoveryConfig())
    art = ScenarioArtifacts(spec, io_samples, trajectory, elog, net)
    if with_model:
        complete = elog.complete_traces
        train_log = EventLog(complete[:17], elog.meta)
        test_log = EventLog(complete[-5:], elog.meta)
        art.decay = DecayConfig(1.0, estimate_horizons(net, train_log))
        train_samples, _ = sample_log(net, train_log, art.decay)
        test_samples, _ = sample_log(net, test_log, art.decay)
        art.model = train(train_samples,
                          TrainConfig(epochs=50, seed=spec.train_seed),
                          art.decay, eval_samples=test_samples)
    art.substituted = run_substituted(net, art.model, spec.plant, spec.duration_s)
    return art


@pytest.fixture(scope="session")
def scenario1() -> ScenarioArtifacts:
    return _build("scenario1", with_model=False)


@pytest.fixture(scope="session")
def scenario2() -> ScenarioArtifacts:
    return _build("scenario2", with_model=True)


@pytest.fixture(scope="session")
def scenario3() -> ScenarioArtifacts:
    return _build("scenario3", with_model=True)
