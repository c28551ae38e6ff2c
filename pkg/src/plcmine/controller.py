"""Substitute closed-loop controller driven by a discovered net.

Each tick the controller receives the set of input-change components observed
at the plant and runs decision rounds until it has to wait for an input:

- a lone hidden transition fires silently;
- reaching the final marking completes a cycle and re-marks the initial place;
- a single enabled labeled transition of output class fires immediately and
  its activity decomposes into actuator commands (Rule 2);
- when only input-class transitions are enabled, the one matching the
  observed change components fires, otherwise the controller waits (Rule 1);
- any other mix (several outputs, or inputs alongside outputs) is ambiguous
  and is resolved by the next-activity classifier (Rule 3): a predicted
  output fires and emits, a predicted input is awaited, a predicted END
  routes to the final marking.

Rounds cascade within one tick so an input change and the output reaction it
triggers land on the same tick, exactly like a scan cycle. Rule counts track
firings (r1/r2/hidden) and classifier queries (r3); an input change matching
no enabled transition is logged as a conformance violation and otherwise
ignored (or raised with strict=True).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ladder import ACTUATOR_WIRING, SENSOR_WIRING
from .logs import (INPUT_CLASS, OUTPUT_CLASS, IOSample, activity_components,
                   component, reduce_log)
from .petri import (LabeledPetriNet, enabled_transitions, fire,
                    hidden_path_to_enable, hidden_path_to_marking)
from .plant import PlantConfig, TankPlant
from .predictor import (DecayConfig, DecayState, END_LABEL, NextActivityModel,
                        TimedStateSample)

log = logging.getLogger(__name__)

CASCADE_CAP = 128


class ControllerError(Exception):
    pass


class DeadlockError(ControllerError):
    def __init__(self, marking_dump: dict):
        super().__init__(f"no transition enabled at marking {marking_dump}")
        self.marking_dump = marking_dump


class PredictorRequiredError(ControllerError):
    """An ambiguous marking was reached but no classifier is configured."""


class ConformanceError(ControllerError):
    """Strict mode: an observed input change matched no enabled transition."""


def classify_enabled(net: LabeledPetriNet, marking) -> dict[str, set[str]]:
    """Partition the enabled transitions into input/output/hidden sets."""
    out = {"inputs": set(), "outputs": set(), "hidden": set()}
    for tid in enabled_transitions(net, marking):
        cls = net.transition(tid).cls
        if cls == INPUT_CLASS:
            out["inputs"].add(tid)
        elif cls == OUTPUT_CLASS:
            out["outputs"].add(tid)
        else:
            out["hidden"].add(tid)
    return out


def decompose_output_activity(activity: str) -> dict[str, bool]:
    """Split a merged output activity into per-address command values."""
    cmds = {}
    for comp in activity_components(activity):
        addr, _, value = comp.rpartition("_")
        cmds[addr] = value == "true"
    return cmds


@dataclass
class ControllerState:
    net: LabeledPetriNet
    model: NextActivityModel | None
    decay_cfg: DecayConfig
    marking: tuple = ()
    clock: float = 0.0
    output_image: dict[str, bool] = field(default_factory=dict)
    decay_state: DecayState = None  # type: ignore[assignment]
    pending_wait: str | None = None
    rule_counts: dict[str, int] = field(
        default_factory=lambda: {"r1": 0, "r2": 0, "r3": 0, "hidden": 0})
    violations: int = 0
    cycles: int = 0

    def __post_init__(self):
        self.marking = tuple(self.net.initial_marking)
        self.decay_state = DecayState(len(self.net.places))
        self.decay_state.begin_cycle(self.marking, self.clock)

    def _fire(self, tid: str) -> None:
        self.marking = fire(self.net, self.marking, tid)
        for p in self.net.postset(tid):
            self.decay_state.token_entry(p, self.clock)
        self.pending_wait = None

    def _sample(self) -> TimedStateSample:
        return TimedStateSample(
            decay=self.decay_state.decay_vector(self.decay_cfg, self.clock),
            counts=self.decay_state.counts.copy(),
            marking=np.array(self.marking),
            label="",
            time_s=self.clock,
        )


def control_step(state: ControllerState, observed: set[str],
                 strict: bool = False) -> dict[str, bool]:
    """Run decision rounds for one tick; returns the output commands emitted."""
    remaining = set(observed)
    commands: dict[str, bool] = {}
    net = state.net

    def matches(tid: str) -> bool:
        comps = set(activity_components(net.transition(tid).label))
        return comps <= remaining

    def consume(tid: str) -> None:
        for comp in activity_components(net.transition(tid).label):
            remaining.discard(comp)

    for _ in range(CASCADE_CAP):
        if state.marking == state.net.final_marking:
            state.cycles += 1
            state.marking = tuple(net.initial_marking)
            state.output_image = {}
            state.decay_state.begin_cycle(state.marking, state.clock)
            state.pending_wait = None
            continue

        enabled = enabled_transitions(net, state.marking)
        if not enabled:
            dump = {p: n for p, n in zip(net.places, state.marking) if n}
            raise DeadlockError(dump)
        labeled = [t for t in enabled if net.transition(t).label is not None]
        hidden = [t for t in enabled if net.transition(t).label is None]

        if not labeled:
            if len(hidden) > 1:
                log.warning("multiple hidden transitions enabled; firing %s", hidden[0])
            state._fire(hidden[0])
            state.rule_counts["hidden"] += 1
            continue

        if state.pending_wait is not None and state.pending_wait in labeled:
            if matches(state.pending_wait):
                consume(state.pending_wait)
                state._fire(state.pending_wait)
                continue
            break  # still waiting on the chosen input
        state.pending_wait = None

        inputs = [t for t in labeled if net.transition(t).cls == INPUT_CLASS]
        outputs = [t for t in labeled if net.transition(t).cls == OUTPUT_CLASS]

        if len(labeled) == 1 and outputs:
            # Rule 2: the single enabled labeled transition is an output.
            tid = outputs[0]
            cmds = decompose_output_activity(net.transition(tid).label)
            commands.update(cmds)
            state.output_image.update(cmds)
            state._fire(tid)
            state.rule_counts["r2"] += 1
            continue

        if not outputs:
            # Rule 1: inputs only; fire the matching one or wait.
            matching = [t for t in inputs if matches(t)]
            if matching:
                matching.sort(key=lambda t: (
                    -len(activity_components(net.transition(t).label)), t))
                tid = matching[0]
                consume(tid)
                state._fire(tid)
                state.rule_counts["r1"] += 1
                continue
            break  # wait for an input change

        # Rule 3: ambiguous marking; ask the classifier.
        state.rule_counts["r3"] += 1
        if state.model is None:
            raise PredictorRequiredError(
                "ambiguous marking reached but no next-activity model is loaded")
        ranked = state.model.predict(state._sample())
        by_label: dict[str, str] = {}
        for tid in sorted(labeled):
            by_label.setdefault(net.transition(tid).label, tid)
        acted = False
        for label, _prob in ranked:
            if label == END_LABEL:
                path = hidden_path_to_marking(net, state.marking,
                                               net.final_marking)
                if path is None:
                    continue
                for tid in path:
                    state._fire(tid)
                    state.rule_counts["hidden"] += 1
                acted = True
                break
            tid = by_label.get(label)
            if tid is None:
                continue
            if net.transition(tid).cls == OUTPUT_CLASS:
                cmds = decompose_output_activity(label)
                commands.update(cmds)
                state.output_image.update(cmds)
                state._fire(tid)
            elif matches(tid):
                consume(tid)
                state._fire(tid)
            else:
                state.pending_wait = tid  # await the predicted input
            acted = True
            break
        if not acted:
            raise ControllerError(
                "classifier ranked no enabled transition or END route")
        if state.pending_wait is not None:
            break
    else:
        raise ControllerError("decision cascade exceeded its round cap")

    if remaining:
        state.violations += 1
        log.warning("input changes %s matched no enabled transition", sorted(remaining))
        if strict:
            raise ConformanceError(f"unmatched input changes {sorted(remaining)}")
    return commands


@dataclass
class ClosedLoopRun:
    io_samples: list[IOSample]
    trajectory: list[dict]
    report: dict


def run_substituted(
    net: LabeledPetriNet,
    model: NextActivityModel | None,
    plant_cfg: PlantConfig,
    duration_s: float,
    strict: bool = False,
    initial_level: float = 0.0,
    liveness_warn_s: float = 300.0,
) -> ClosedLoopRun:
    """Closed loop with the discovered net in place of the real program.

    Per tick: read sensors, derive change components (first readings compare
    against an implicit false), run the decision rounds, apply any emitted
    commands, record the IO images, step the plant.
    """
    decay_cfg = (model.decay if model is not None
                 else DecayConfig(1.0, np.ones(len(net.places))))
    state = ControllerState(net=net, model=model, decay_cfg=decay_cfg)
    plant = TankPlant(plant_cfg, initial_level=initial_level)
    ticks = int(round(duration_s / plant_cfg.dt))

    actuators = {addr: False for addr in sorted(ACTUATOR_WIRING)}
    prev_inputs: dict[str, bool] = {}
    samples: list[IOSample] = []
    trajectory: list[dict] = []
    report = {
        "rule_counts": state.rule_counts,
        "violations": 0,
        "cycles": 0,
        "deadlocked": False,
    }
    input_addrs = sorted(SENSOR_WIRING)
    last_progress = 0
    warned = False

    for tick in range(ticks):
        state.clock = tick * plant_cfg.dt
        sensors = plant.sensors()
        inputs = {addr: sensors[SENSOR_WIRING[addr]] for addr in input_addrs}
        observed = {component(addr, val) for addr, val in inputs.items()
                    if val != prev_inputs.get(addr, False)}
        prev_inputs = dict(inputs)

        try:
            commands = control_step(state, observed, strict=strict)
        except DeadlockError as exc:
            report["deadlocked"] = True
            report["deadlock_marking"] = exc.marking_dump
            report["deadlock_tick"] = tick
            log.error("controller deadlocked at tick %d: %s", tick, exc)
            break
        if commands or observed:
            last_progress = tick
        elif (tick - last_progress) * plant_cfg.dt > liveness_warn_s and not warned:
            log.warning("no IO activity for %.0f s; controller may be stuck waiting",
                        (tick - last_progress) * plant_cfg.dt)
            warned = True
        actuators.update(commands)

        for addr in input_addrs:
            samples.append(IOSample(tick, addr, inputs[addr], INPUT_CLASS))
        for addr in sorted(actuators):
            samples.append(IOSample(tick, addr, actuators[addr], OUTPUT_CLASS))
        trajectory.append({
            "tick": tick,
            "level": plant.state.level,
            "ULS": sensors["ULS"], "MLS": sensors["MLS"], "LLS": sensors["LLS"],
            "inv": actuators["%QX0.0"], "outv": actuators["%QX0.1"],
        })
        plant.step(actuators["%QX0.0"], actuators["%QX0.1"])

    report["violations"] = state.violations
    report["cycles"] = state.cycles
    return ClosedLoopRun(samples, trajectory, report)


def replay_rule_profile(net: LabeledPetriNet, traces) -> dict[str, int]:
    """Classify every pre-firing marking seen while replaying the traces.

    Counts which rule each decision point would fall under when the net runs
    as a controller: r2 for a lone enabled output, r1 for input-only markings,
    r3 for ambiguous ones (several outputs, or inputs mixed with outputs),
    hidden for the silent routing steps. An r3 count of zero means the net
    alone can drive the plant and no classifier is needed.
    """
    profile = {"r1": 0, "r2": 0, "r3": 0, "hidden": 0}
    for trace in traces:
        marking = net.initial_marking
        for activity in trace.activities():
            candidates = [t.tid for t in net.transitions_labeled(activity)]
            found = hidden_path_to_enable(net, marking, candidates)
            if found is None:
                break
            sets = classify_enabled(net, marking)
            n_labeled = len(sets["inputs"]) + len(sets["outputs"])
            if n_labeled == 1 and sets["outputs"]:
                profile["r2"] += 1
            elif not sets["outputs"] and sets["inputs"]:
                profile["r1"] += 1
            elif sets["outputs"]:
                profile["r3"] += 1
            path, target = found
            for tid in path:
                profile["hidden"] += 1
                marking = fire(net, marking, tid)
            marking = fire(net, marking, target)
        tail = hidden_path_to_marking(net, marking, net.final_marking)
        if tail:
            profile["hidden"] += len(tail)
    return profile


# -- comparison harness ------------------------------------------------------------

class ComparisonError(Exception):
    pass


def switch_ticks(trajectory: list[dict]) -> list[int]:
    """Ticks where the actuator pair changes (first row vs. all-closed)."""
    out = []
    prev = (False, False)
    for row in trajectory:
        cur = (row["inv"], row["outv"])
        if cur != prev:
            out.append(row["tick"])
            prev = cur
    return out


def compare_trajectories(traj_a: list[dict], io_a: list[IOSample],
                         traj_b: list[dict], io_b: list[IOSample]) -> dict:
    """Pointwise level difference, switching offsets, and activity equality."""
    if len(traj_a) != len(traj_b):
        raise ComparisonError(
            f"trajectory lengths differ: {len(traj_a)} vs {len(traj_b)}")
    max_level_diff = max(
        (abs(a["level"] - b["level"]) for a, b in zip(traj_a, traj_b)),
        default=0.0)
    sw_a, sw_b = switch_ticks(traj_a), switch_ticks(traj_b)
    offsets = [b - a for a, b in zip(sw_a, sw_b)]
    seq_a = [e.activity for e in reduce_log(io_a)]
    seq_b = [e.activity for e in reduce_log(io_b)]
    return {
        "max_level_diff": max_level_diff,
        "switch_tick_diffs": offsets,
        "switch_counts": [len(sw_a), len(sw_b)],
        "event_sequence_equal": seq_a == seq_b,
    }
