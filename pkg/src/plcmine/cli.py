"""Command-line front end for the full pipeline.

Subcommands: record, convert, discover, train, substitute, validate, pipeline.
Every command reads/writes fixed artifact names inside --out-dir so the
stages compose (pipeline calls exactly the stage functions), and everything
downstream of a seed is byte-reproducible.

Artifacts: io.csv, trajectory.csv, record_meta.json, events.json, net.json,
dfg.dot, model.json, samples.csv, sub_io.csv, sub_trajectory.csv,
run_report.json, report.json, validate_report.json, compare.svg.

Exit codes: 0 success, 2 validation failure, 1 error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import controller, discovery, ladder, logs, petri, plant, predictor
from .plant import RNG_ALGORITHM
from .scenarios import (DEFAULT_DT_S, DEFAULT_DURATION_S, SCENARIO_NAMES,
                        ScenarioSpec, make_scenario)

log = logging.getLogger(__name__)


class ValidationFailure(Exception):
    """A validate check did not hold; maps to exit code 2."""


def _write_json(data: dict, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# -- stages -----------------------------------------------------------------------


def stage_record(spec: ScenarioSpec, out: Path) -> dict:
    samples, trajectory = ladder.run_closed_loop(
        spec.build_program(), spec.plant, spec.duration_s)
    logs.write_io_csv(samples, out / "io.csv")
    plant.write_trajectory(trajectory, out / "trajectory.csv", spec.plant.dt)
    events = logs.reduce_log(samples)
    meta = {
        "scenario": spec.name,
        "seed": spec.seed,
        "duration_s": spec.duration_s,
        "dt_s": spec.plant.dt,
        "reset": spec.reset,
        "rng": RNG_ALGORITHM,
        "ticks": int(round(spec.duration_s / spec.plant.dt)),
        "io_samples": len(samples),
        "change_events": len(events),
    }
    _write_json(meta, out / "record_meta.json")
    print(f"recorded {meta['ticks']} ticks, {len(samples)} samples, "
          f"{len(events)} change events")
    return meta


def stage_convert(spec: ScenarioSpec, out: Path) -> logs.EventLog:
    samples = logs.read_io_csv(out / "io.csv")
    events = logs.reduce_log(samples)
    elog = logs.split_traces(events, spec.reset, {
        "scenario": spec.name,
        "duration_s": spec.duration_s,
        "dt_s": spec.plant.dt,
    })
    logs.write_event_log(elog, out / "events.json")
    print(f"converted to {len(elog.traces)} traces "
          f"({len(elog.complete_traces)} complete)")
    return elog


def stage_discover(out: Path, edge_filter: float) -> petri.LabeledPetriNet:
    elog = logs.read_event_log(out / "events.json")
    cfg = discovery.DiscoveryConfig(edge_filter_percentile=edge_filter)
    net = discovery.discover_net(elog, cfg)
    petri.write_net(net, out / "net.json")
    dfg = discovery.build_dfg(
        logs.EventLog(elog.complete_traces or elog.traces, elog.meta))
    (out / "dfg.dot").write_text(discovery.dfg_to_dot(dfg))
    hidden = len(net.hidden_transitions)
    print(f"discovered net: {len(net.places)} places, "
          f"{len(net.transitions)} transitions ({hidden} hidden)")
    return net


def parse_split(split: str) -> tuple[int, int]:
    try:
        train_n, test_n = (int(x) for x in split.split("/"))
    except ValueError:
        raise SystemExit(f"bad --split {split!r}; expected like 17/5")
    if train_n < 1 or test_n < 1:
        raise SystemExit("--split counts must be positive")
    return train_n, test_n


def split_log(elog: logs.EventLog, train_n: int, test_n: int):
    """Chronological split of the complete traces: first train_n / last test_n."""
    complete = elog.complete_traces
    if len(complete) < 2:
        raise SystemExit("not enough complete traces to split")
    test_n = min(test_n, len(complete) - 1)
    train_n = min(train_n, len(complete) - test_n)
    train = logs.EventLog(complete[:train_n], elog.meta)
    test = logs.EventLog(complete[-test_n:], elog.meta)
    return train, test


def stage_train(spec: ScenarioSpec, out: Path, epochs: int,
                split: str) -> predictor.NextActivityModel:
    elog = logs.read_event_log(out / "events.json")
    net = petri.read_net(out / "net.json")
    train_log, test_log = split_log(elog, *parse_split(split))
    decay_cfg = predictor.DecayConfig(
        1.0, predictor.estimate_horizons(net, train_log))
    train_samples, skipped = predictor.sample_log(net, train_log, decay_cfg)
    test_samples, _ = predictor.sample_log(net, test_log, decay_cfg)
    model = predictor.train(
        train_samples,
        predictor.TrainConfig(epochs=epochs, seed=spec.train_seed),
        decay_cfg,
        eval_samples=test_samples,
    )
    model.training_meta.update({
        "train_traces": len(train_log.traces),
        "test_traces": len(test_log.traces),
        "skipped_traces": skipped,
    })
    predictor.write_model(model, out / "model.json")
    predictor.write_samples_csv(train_samples, net.places, out / "samples.csv")
    print(f"trained on {len(train_samples)} samples: "
          f"train accuracy {model.training_meta['train_accuracy']:.3f}, "
          f"test accuracy {model.training_meta['test_accuracy']:.3f}")
    return model


def stage_substitute(spec: ScenarioSpec, out: Path,
                     strict: bool) -> controller.ClosedLoopRun:
    net = petri.read_net(out / "net.json")
    model_path = out / "model.json"
    model = predictor.read_model(model_path) if model_path.exists() else None
    run = controller.run_substituted(net, model, spec.plant, spec.duration_s,
                                     strict=strict)
    logs.write_io_csv(run.io_samples, out / "sub_io.csv")
    plant.write_trajectory(run.trajectory, out / "sub_trajectory.csv", spec.plant.dt)
    report = dict(run.report, rng=RNG_ALGORITHM, scenario=spec.name, seed=spec.seed)
    _write_json(report, out / "run_report.json")
    print(f"substituted run: {report['cycles']} cycles, "
          f"rules {report['rule_counts']}, violations {report['violations']}, "
          f"deadlocked {report['deadlocked']}")
    return run


def _fills_per_cycle(io_samples, reset: str) -> list[int]:
    elog = logs.split_traces(logs.reduce_log(io_samples), reset)
    return [sum(1 for a in t.activities() if "%IX0.0_true" in a.split("+"))
            for t in elog.complete_traces]


def stage_validate(spec: ScenarioSpec, out: Path, strict: bool) -> dict:
    net = petri.read_net(out / "net.json")
    model_path = out / "model.json"
    model = predictor.read_model(model_path) if model_path.exists() else None

    known_addrs = set(ladder.SENSOR_WIRING) | set(ladder.ACTUATOR_WIRING)
    net_addrs = {comp.rsplit("_", 1)[0]
                 for t in net.transitions if t.label
                 for comp in logs.activity_components(t.label)}
    if not net_addrs <= known_addrs:
        raise ValueError(
            f"net references addresses {sorted(net_addrs - known_addrs)} "
            f"not present in this plant wiring")

    prog = spec.build_program()
    true_io, true_traj = ladder.run_closed_loop(prog, spec.plant, spec.duration_s)
    sub = controller.run_substituted(net, model, spec.plant, spec.duration_s,
                                     strict=strict)
    cmp = controller.compare_trajectories(true_traj, true_io,
                                          sub.trajectory, sub.io_samples)

    true_cycles = {tuple(t.activities()) for t in logs.split_traces(
        logs.reduce_log(true_io), spec.reset).complete_traces}
    sub_cycles = {tuple(t.activities()) for t in logs.split_traces(
        logs.reduce_log(sub.io_samples), spec.reset).complete_traces}

    checks = {
        "no_deadlock": not sub.report["deadlocked"],
        "event_sequence_equal": cmp["event_sequence_equal"],
        "cycle_patterns_equal": sub_cycles == true_cycles,
    }
    if spec.name == "scenario1":
        checks["rule3_never_invoked"] = sub.report["rule_counts"]["r3"] == 0
        checks["max_level_diff_ok"] = cmp["max_level_diff"] <= 0.9
    if spec.program_kind == "counted_batch":
        fills = _fills_per_cycle(sub.io_samples, spec.reset)
        checks["three_fills_per_cycle"] = bool(fills) and all(n == 3 for n in fills)

    report = {
        "scenario": spec.name,
        "seed": spec.seed,
        "comparison": {k: (v if k != "switch_tick_diffs" else v[:50])
                       for k, v in cmp.items()},
        "substituted_report": sub.report,
        "checks": checks,
        "passed": all(checks.values()),
    }
    _write_json(report, out / "validate_report.json")
    plot_comparison(true_traj, sub.trajectory, spec.plant.dt, out / "compare.svg")
    for name, ok in checks.items():
        print(f"  check {name}: {'pass' if ok else 'FAIL'}")
    if not report["passed"]:
        raise ValidationFailure("validation checks failed")
    return report


def stage_pipeline(spec: ScenarioSpec, out: Path, edge_filter: float,
                   epochs: int, split: str, force_train: bool) -> dict:
    record_meta = stage_record(spec, out)
    elog = stage_convert(spec, out)
    net = stage_discover(out, edge_filter)

    complete = elog.complete_traces
    fitting = sum(
        1 for t in complete
        if (r := petri.replay_trace(net, t.activities())).reached_final
        and r.missing_tokens == 0)
    profile = controller.replay_rule_profile(net, complete)
    needs_model = profile["r3"] > 0 or force_train

    model_meta = None
    if needs_model:
        model = stage_train(spec, out, epochs, split)
        model_meta = dict(model.training_meta)

    report = {
        "scenario": spec.name,
        "seed": spec.seed,
        "rng": RNG_ALGORITHM,
        "duration_s": spec.duration_s,
        "dt_s": spec.plant.dt,
        "record": record_meta,
        "traces_total": len(elog.traces),
        "traces_complete": len(complete),
        "net": {
            "places": len(net.places),
            "transitions": len(net.transitions),
            "hidden": len(net.hidden_transitions),
        },
        "replay_fitness": {"fitting": fitting, "of": len(complete)},
        "replay_rule_profile": profile,
        "predictor": model_meta,  # null when the net alone suffices
    }
    _write_json(report, out / "report.json")
    print(f"pipeline report: {len(complete)} complete traces, "
          f"replay {fitting}/{len(complete)}, "
          f"predictor {'trained' if model_meta else 'not required'}")
    return report


# -- plotting ---------------------------------------------------------------------


def plot_comparison(true_traj, sub_traj, dt: float, path: Path) -> None:
    """Level on top, then LLS/ULS/MLS lanes, true run vs substituted run."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(4, 1, figsize=(10, 8), sharex=True)
    t_true = [r["tick"] * dt for r in true_traj]
    t_sub = [r["tick"] * dt for r in sub_traj]
    axes[0].plot(t_true, [r["level"] for r in true_traj], label="plc program")
    axes[0].plot(t_sub, [r["level"] for r in sub_traj], "--", label="substitute")
    axes[0].set_ylabel("level [gal]")
    axes[0].legend(loc="upper right")
    for ax, sensor in zip(axes[1:], ("LLS", "ULS", "MLS")):
        ax.step(t_true, [int(r[sensor]) for r in true_traj], where="post")
        ax.step(t_sub, [int(r[sensor]) for r in sub_traj], "--", where="post")
        ax.set_ylabel(sensor)
        ax.set_yticks([0, 1])
    axes[-1].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# -- argument handling --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plcmine",
        description="Reconstruct and substitute a black-box PLC program "
                    "from tapped IO recordings.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_scenario=True):
        if needs_scenario:
            p.add_argument("--scenario", choices=SCENARIO_NAMES, required=True)
        p.add_argument("--duration", type=float, default=DEFAULT_DURATION_S,
                       help="recording duration in seconds")
        p.add_argument("--dt", type=float, default=DEFAULT_DT_S,
                       help="tick duration in seconds")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("record", help="run the real program and tap its IO")
    common(p)

    p = sub.add_parser("convert", help="reduce io.csv to an event log")
    common(p)

    p = sub.add_parser("discover", help="discover a net from events.json")
    common(p)
    p.add_argument("--edge-filter", type=float, default=0.0)

    p = sub.add_parser("train", help="train the next-activity classifier")
    common(p)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--split", default="17/5",
                   help="train/test complete-trace counts, e.g. 17/5")

    p = sub.add_parser("substitute", help="drive the plant with the net")
    common(p)
    p.add_argument("--strict", action="store_true",
                   help="halt on conformance violations")

    p = sub.add_parser("validate", help="compare the substitute against the program")
    common(p)
    p.add_argument("--strict", action="store_true")

    p = sub.add_parser("pipeline", help="record, convert, discover, train, report")
    common(p)
    p.add_argument("--edge-filter", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--split", default="17/5")
    p.add_argument("--force-train", action="store_true",
                   help="train the classifier even if no marking needs it")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:  # --help
            raise
        return 1
    spec = make_scenario(args.scenario, duration_s=args.duration, dt=args.dt,
                         seed=args.seed)
    out: Path = args.out_dir
    out.mkdir(parents=True, exist_ok=True)

    try:
        if args.command == "record":
            stage_record(spec, out)
        elif args.command == "convert":
            stage_convert(spec, out)
        elif args.command == "discover":
            stage_discover(out, args.edge_filter)
        elif args.command == "train":
            stage_train(spec, out, args.epochs, args.split)
        elif args.command == "substitute":
            stage_substitute(spec, out, args.strict)
        elif args.command == "validate":
            stage_validate(spec, out, args.strict)
        elif args.command == "pipeline":
            stage_pipeline(spec, out, args.edge_filter, args.epochs,
                           args.split, args.force_train)
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
