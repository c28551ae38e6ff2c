"""Minimal ladder-logic runtime with PLC scan-cycle semantics.

A program is a set of address-mapped Boolean inputs/outputs, internal coils,
up-counters, and an ordered rung list. One scan latches the input image,
updates counter edges against the previous scan, then evaluates rungs top to
bottom — each coil assignment is visible to the rungs below it, and the
output image is written at the end.

Rung expressions are a small s-expression AST that is JSON-serializable as-is:
a string names a Boolean variable (counter done flags are "name.done"), a list
is ["not"|"and"|"or"|"xor", ...operands].

Two reference programs are built in: a two-point level cycle (fill to the top
sensor, drain to the bottom one) and a counted batch cycle (oscillate between
the middle and top sensors a preset number of times, then drain below the
bottom sensor).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .logs import INPUT_CLASS, OUTPUT_CLASS, IOSample
from .plant import PlantConfig, TankPlant


class WiringError(Exception):
    """A rung or scan references an address/variable that is not declared."""


Expr = str | list


def eval_expr(expr: Expr, env: Mapping[str, bool]) -> bool:
    if isinstance(expr, str):
        try:
            return bool(env[expr])
        except KeyError:
            raise WiringError(f"undeclared variable {expr!r}") from None
    op, *args = expr
    if op == "not":
        return not eval_expr(args[0], env)
    if op == "and":
        return all(eval_expr(a, env) for a in args)
    if op == "or":
        return any(eval_expr(a, env) for a in args)
    if op == "xor":
        return eval_expr(args[0], env) != eval_expr(args[1], env)
    raise WiringError(f"unknown operator {op!r}")


def expr_variables(expr: Expr) -> set[str]:
    if isinstance(expr, str):
        return {expr}
    out: set[str] = set()
    for a in expr[1:]:
        out |= expr_variables(a)
    return out


@dataclass
class CounterBlock:
    """IEC-style up-counter: counts rising edges, saturates at preset.

    The reset input is level-sensitive and dominates; the done flag is
    count >= preset and is readable by rungs as "<name>.done".
    """

    name: str
    preset: int
    count_input: Expr
    reset_input: Expr
    count: int = 0
    _prev_count_in: bool = field(default=False, repr=False)

    @property
    def done(self) -> bool:
        return self.count >= self.preset

    def scan(self, env: Mapping[str, bool]) -> None:
        cur = eval_expr(self.count_input, env)
        if eval_expr(self.reset_input, env):
            self.count = 0
        elif cur and not self._prev_count_in:
            self.count = min(self.count + 1, self.preset)
        self._prev_count_in = cur

    def reset_state(self) -> None:
        self.count = 0
        self._prev_count_in = False


@dataclass
class LadderProgram:
    inputs: dict[str, str]            # address -> variable
    outputs: dict[str, str]           # address -> variable
    internals: tuple[str, ...]
    counters: list[CounterBlock]
    rungs: list[tuple[str, Expr]]     # (coil variable, expression), scan order

    def __post_init__(self):
        declared = (set(self.inputs.values()) | set(self.outputs.values())
                    | set(self.internals)
                    | {f"{c.name}.done" for c in self.counters})
        for coil, expr in self.rungs:
            if coil not in declared:
                raise WiringError(f"rung assigns undeclared coil {coil!r}")
            missing = expr_variables(expr) - declared
            if missing:
                raise WiringError(f"rung for {coil!r} references undeclared {missing}")
        for c in self.counters:
            missing = (expr_variables(c.count_input)
                       | expr_variables(c.reset_input)) - declared
            if missing:
                raise WiringError(f"counter {c.name!r} references undeclared {missing}")
        self._env: dict[str, bool] = {v: False for v in declared}
        for c in self.counters:
            self._env[f"{c.name}.done"] = c.done

    def reset_state(self) -> None:
        for k in self._env:
            self._env[k] = False
        for c in self.counters:
            c.reset_state()
            self._env[f"{c.name}.done"] = c.done

    def scan_cycle(self, input_values: Mapping[str, bool]) -> dict[str, bool]:
        """One scan: latch inputs, step counters, run rungs, return output image."""
        for addr, var in self.inputs.items():
            if addr not in input_values:
                raise WiringError(f"missing input address {addr}")
            self._env[var] = bool(input_values[addr])
        for c in self.counters:
            c.scan(self._env)
            self._env[f"{c.name}.done"] = c.done
        for coil, expr in self.rungs:
            self._env[coil] = eval_expr(expr, self._env)
        return {addr: self._env[var] for addr, var in self.outputs.items()}

    def output_image(self) -> dict[str, bool]:
        return {addr: self._env[var] for addr, var in self.outputs.items()}


# -- program <-> JSON IR --------------------------------------------------------

def program_to_dict(prog: LadderProgram) -> dict:
    return {
        "inputs": dict(prog.inputs),
        "outputs": dict(prog.outputs),
        "internals": list(prog.internals),
        "counters": [
            {"name": c.name, "preset": c.preset,
             "count_input": c.count_input, "reset_input": c.reset_input}
            for c in prog.counters
        ],
        "rungs": [{"coil": coil, "expr": expr} for coil, expr in prog.rungs],
    }


def program_from_dict(data: Mapping) -> LadderProgram:
    return LadderProgram(
        inputs=dict(data["inputs"]),
        outputs=dict(data["outputs"]),
        internals=tuple(data["internals"]),
        counters=[
            CounterBlock(c["name"], c["preset"], c["count_input"], c["reset_input"])
            for c in data["counters"]
        ],
        rungs=[(r["coil"], r["expr"]) for r in data["rungs"]],
    )


# -- reference programs ---------------------------------------------------------

# Address map: sensors ULS/LLS/MLS on the input terminals, valves on the
# output terminals. Both reference programs share this wiring.
SENSOR_WIRING = {"%IX0.0": "ULS", "%IX0.1": "LLS", "%IX0.2": "MLS"}
ACTUATOR_WIRING = {"%QX0.0": "inv", "%QX0.1": "outv"}

_INPUT_MAP = {"%IX0.0": "ul", "%IX0.1": "ll", "%IX0.2": "ml"}
_OUTPUT_MAP = {"%QX0.0": "inv", "%QX0.1": "outv"}
_SENSOR_VAR = {"%IX0.0": "ULS", "%IX0.1": "LLS", "%IX0.2": "MLS"}


def build_level_cycle_program() -> LadderProgram:
    """Fill until the top sensor trips, then drain until the bottom one clears.

    Seal-in latch: ctrl holds while the level is between the two sensors, so
    the valves never chatter mid-band.
    """
    return LadderProgram(
        inputs=dict(_INPUT_MAP),
        outputs=dict(_OUTPUT_MAP),
        internals=("ctrl",),
        counters=[],
        rungs=[
            ("ctrl", ["and", ["not", "ul"], ["or", "ctrl", ["not", "ll"]]]),
            ("inv", "ctrl"),
            ("outv", ["not", "ctrl"]),
        ],
    )


def build_counted_batch_program(preset: int = 3) -> LadderProgram:
    """Oscillate between the middle and top sensors, then drain out.

    An up-counter counts top-sensor hits; until it reaches the preset, the
    drain turns around at the middle sensor. Once done, the pass coil keeps
    the fill latch off so the level falls below the bottom sensor, which
    resets the counter and restarts the batch.
    """
    return LadderProgram(
        inputs=dict(_INPUT_MAP),
        outputs=dict(_OUTPUT_MAP),
        internals=("ctrl", "pass"),
        counters=[CounterBlock("cnt", preset, count_input="ul",
                               reset_input=["not", "ll"])],
        rungs=[
            ("pass", "cnt.done"),
            ("ctrl", ["and", ["not", "ul"],
                      ["or", "ctrl", ["not", "ll"],
                       ["and", ["not", "ml"], ["not", "pass"]]]]),
            ("inv", "ctrl"),
            ("outv", ["not", "ctrl"]),
        ],
    )


# -- closed loop -----------------------------------------------------------------

def run_closed_loop(
    prog: LadderProgram,
    plant_cfg: PlantConfig,
    duration_s: float,
    initial_level: float = 0.0,
) -> tuple[list[IOSample], list[dict]]:
    """Drive the plant with the program and tap both sides of the PLC.

    Per tick: read sensors, record the input image, scan, record the output
    image (always after the inputs at the same tick), apply the outputs, step
    the plant. Returns (IO samples, trajectory rows).
    """
    prog.reset_state()
    plant = TankPlant(plant_cfg, initial_level=initial_level)
    ticks = int(round(duration_s / plant_cfg.dt))
    samples: list[IOSample] = []
    trajectory: list[dict] = []

    input_addrs = sorted(prog.inputs)
    output_addrs = sorted(prog.outputs)

    for tick in range(ticks):
        sensors = plant.sensors()
        input_values = {addr: sensors[_SENSOR_VAR[addr]] for addr in input_addrs}
        for addr in input_addrs:
            samples.append(IOSample(tick, addr, input_values[addr], INPUT_CLASS))
        outputs = prog.scan_cycle(input_values)
        for addr in output_addrs:
            samples.append(IOSample(tick, addr, outputs[addr], OUTPUT_CLASS))
        trajectory.append({
            "tick": tick,
            "level": plant.state.level,
            "ULS": sensors["ULS"], "MLS": sensors["MLS"], "LLS": sensors["LLS"],
            "inv": outputs["%QX0.0"], "outv": outputs["%QX0.1"],
        })
        plant.step(outputs["%QX0.0"], outputs["%QX0.1"])
    return samples, trajectory
