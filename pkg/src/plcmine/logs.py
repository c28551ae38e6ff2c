"""IO-tap recordings and their conversion to process-mining event logs.

The raw log is one Boolean sample per address per tick, inputs written before
outputs within a tick. Conversion is a change detector: a sample emits a
component ``<address>_<true|false>`` when the value differs from the address's
previous one (first observations compare against an implicit false — all
signals are assumed low at power-on). Components sharing a tick and a class
merge into one event whose activity is the "+"-joined, address-sorted
component list.

The event stream splits into traces at the reset component: the event carrying
it is the *last* event of its trace, so every complete trace is one process
cycle running from just-after-reset to its own reset. The leading segment
(power-on transient) and the trailing segment (cut off by the recording end)
are kept but flagged incomplete.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

from .petri import INPUT_CLASS, OUTPUT_CLASS

log = logging.getLogger(__name__)


class OrderingError(Exception):
    """IO samples are not in (tick, inputs-before-outputs) order."""


class AddressClassError(Exception):
    """Sample class does not match its address prefix."""


class EventLogFormatError(Exception):
    """Malformed or invariant-violating event-log data."""


def class_of_address(address: str) -> str:
    if address.startswith("%I"):
        return INPUT_CLASS
    if address.startswith("%Q"):
        return OUTPUT_CLASS
    raise AddressClassError(f"address {address!r} has no %I/%Q prefix")


@dataclass(frozen=True)
class IOSample:
    tick: int
    address: str
    value: bool
    cls: str

    def __post_init__(self):
        if class_of_address(self.address) != self.cls:
            raise AddressClassError(
                f"sample class {self.cls} does not match address {self.address}")


def component(address: str, value: bool) -> str:
    return f"{address}_{'true' if value else 'false'}"


def activity_components(activity: str) -> list[str]:
    return activity.split("+")


def canonical_activity(components) -> str:
    """Address-sorted, "+"-joined component list. Idempotent on activities."""
    parts = []
    for c in components:
        parts.extend(activity_components(c))
    parts.sort(key=lambda c: (c.rsplit("_", 1)[0], c))
    return "+".join(parts)


def activity_class(activity: str) -> str:
    return class_of_address(activity_components(activity)[0].rsplit("_", 1)[0])


@dataclass(frozen=True)
class Event:
    activity: str
    cls: str
    tick: int


@dataclass
class Trace:
    events: list[Event]
    complete: bool = True

    def activities(self) -> list[str]:
        return [e.activity for e in self.events]


@dataclass
class EventLog:
    traces: list[Trace]
    meta: dict = field(default_factory=dict)

    @property
    def complete_traces(self) -> list[Trace]:
        return [t for t in self.traces if t.complete]


def reduce_log(samples) -> list[Event]:
    """Collapse an IO recording into change events, merged per tick and class."""
    events: list[Event] = []
    last_value: dict[str, bool] = {}
    pending: list[str] = []
    cur_tick: int | None = None
    cur_cls: str | None = None
    prev_tick: int | None = None
    seen_output_this_tick = False

    def flush():
        if pending:
            events.append(Event(canonical_activity(pending), cur_cls, cur_tick))
            pending.clear()

    for s in samples:
        if prev_tick is not None and s.tick < prev_tick:
            raise OrderingError(f"tick {s.tick} after tick {prev_tick}")
        if s.tick != prev_tick:
            seen_output_this_tick = False
        if s.cls == INPUT_CLASS and seen_output_this_tick and s.tick == prev_tick:
            raise OrderingError(f"input sample after output sample at tick {s.tick}")
        if s.cls == OUTPUT_CLASS:
            seen_output_this_tick = True
        prev_tick = s.tick

        changed = s.value != last_value.get(s.address, False)
        last_value[s.address] = s.value
        if not changed:
            continue
        if s.tick != cur_tick or s.cls != cur_cls:
            flush()
            cur_tick, cur_cls = s.tick, s.cls
        pending.append(component(s.address, s.value))
    flush()
    return events


def split_traces(events, reset: str, meta: dict | None = None) -> EventLog:
    """Cut the event stream into traces; the reset-carrying event ends a trace.

    A trace is complete iff it starts right after a reset and ends with one;
    the leading and trailing segments are kept with complete=False. A stream
    with no reset at all yields one incomplete trace and a warning.
    """
    segments: list[list[Event]] = []
    cur: list[Event] = []
    for ev in events:
        cur.append(ev)
        if reset in activity_components(ev.activity):
            segments.append(cur)
            cur = []
    trailing = bool(cur)
    if cur:
        segments.append(cur)

    if len(segments) == 1 and trailing:
        log.warning("reset component %r never occurs; returning a single trace", reset)

    traces = []
    for i, seg in enumerate(segments):
        ends_with_reset = not (trailing and i == len(segments) - 1)
        traces.append(Trace(seg, complete=(i > 0 and ends_with_reset)))
    return EventLog(traces, dict(meta or {}, reset=reset))


# -- IO log CSV -------------------------------------------------------------------

IO_HEADER = ["tick", "address", "value", "class"]


def write_io_csv(samples, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(IO_HEADER)
        for s in samples:
            w.writerow([s.tick, s.address, "true" if s.value else "false", s.cls])


def read_io_csv(path) -> list[IOSample]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for i, row in enumerate(reader, start=2):
            try:
                out.append(IOSample(int(row["tick"]), row["address"],
                                    row["value"] == "true", row["class"]))
            except (KeyError, ValueError, TypeError) as exc:
                raise EventLogFormatError(f"{path}:{i}: bad IO row {row!r}") from exc
    return out


# -- event log JSON ----------------------------------------------------------------

def event_log_to_dict(elog: EventLog) -> dict:
    return {
        "meta": {
            "scenario": elog.meta.get("scenario", ""),
            "reset": elog.meta.get("reset", ""),
            "duration_s": elog.meta.get("duration_s", 0.0),
            "dt_s": elog.meta.get("dt_s", 0.0),
        },
        "traces": [
            {"events": [
                {"activity": e.activity, "class": e.cls, "tick": e.tick}
                for e in t.events
            ]}
            for t in elog.traces
        ],
    }


def event_log_from_dict(data: dict) -> EventLog:
    try:
        meta = dict(data["meta"])
        reset = meta.get("reset", "")
        traces = []
        raw_traces = data["traces"]
        for i, t in enumerate(raw_traces):
            events = [Event(e["activity"], e["class"], int(e["tick"]))
                      for e in t["events"]]
            if not events:
                raise EventLogFormatError(f"trace {i} is empty")
            ends_with_reset = reset in activity_components(events[-1].activity)
            is_trailing = i == len(raw_traces) - 1 and not ends_with_reset
            traces.append(Trace(events, complete=(i > 0 and not is_trailing
                                                  and ends_with_reset)))
        if not traces:
            raise EventLogFormatError("event log has no traces")
        return EventLog(traces, meta)
    except (KeyError, TypeError) as exc:
        raise EventLogFormatError(f"malformed event log: {exc}") from exc


def write_event_log(elog: EventLog, path) -> None:
    if not elog.traces:
        raise EventLogFormatError("refusing to write an event log with no traces")
    if any(not t.events for t in elog.traces):
        raise EventLogFormatError("refusing to write an empty trace")
    with open(path, "w") as fh:
        json.dump(event_log_to_dict(elog), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_event_log(path) -> EventLog:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise EventLogFormatError(
                f"{path}: parse error at line {exc.lineno} column {exc.colno}") from exc
    return event_log_from_dict(data)
