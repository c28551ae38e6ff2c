"""Labeled Petri nets: structure, markings, firing semantics, token replay.

The net model is deliberately plain: places and transitions are string
identifiers kept in canonical (lexicographic) order so markings are plain
integer vectors with a stable index layout. Transitions carry an optional
activity label and, when labeled, an IO class ("%I" or "%Q"); unlabeled
transitions are hidden routing transitions. All operations are pure — firing
returns a new marking and never mutates the net.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

INPUT_CLASS = "%I"
OUTPUT_CLASS = "%Q"

# Replay inserts hidden firings to enable a labeled transition; chains longer
# than this are treated as non-fitting rather than searched.
HIDDEN_SEARCH_DEPTH = 4


class PetriNetError(Exception):
    pass


class DimensionError(PetriNetError):
    """Marking vector length does not match the net's place count."""


class NotEnabledError(PetriNetError):
    """Attempt to fire a transition that is not enabled."""


class UnknownActivityError(PetriNetError):
    """Trace contains an activity no transition is labeled with."""


Marking = tuple[int, ...]


@dataclass(frozen=True)
class Transition:
    tid: str
    label: str | None  # None = hidden
    cls: str | None    # "%I" | "%Q" for labeled transitions, None for hidden


@dataclass
class LabeledPetriNet:
    """Bipartite place/transition graph with labels, classes, and markings.

    ``places`` and ``transitions`` are sorted by identifier on construction;
    marking vectors index places in that order. Arcs are (source, target)
    identifier pairs and must connect a place with a transition.
    """

    places: tuple[str, ...]
    transitions: tuple[Transition, ...]
    arcs: frozenset[tuple[str, str]]
    initial_marking: Marking
    final_marking: Marking

    _place_index: dict[str, int] = field(init=False, repr=False)
    _pre: dict[str, tuple[int, ...]] = field(init=False, repr=False)
    _post: dict[str, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        given = tuple(self.places)
        if len(set(given)) != len(given):
            raise PetriNetError("duplicate place identifiers")
        self.places = tuple(sorted(given))
        if self.places != given:
            # Callers may list places in any order; markings are given in that
            # order and remapped to the canonical one here.
            for attr in ("initial_marking", "final_marking"):
                m = tuple(getattr(self, attr))
                if len(m) == len(given):
                    by_place = dict(zip(given, m))
                    setattr(self, attr, tuple(by_place[p] for p in self.places))
        self.transitions = tuple(sorted(self.transitions, key=lambda t: t.tid))
        tids = [t.tid for t in self.transitions]
        if len(set(tids)) != len(tids):
            raise PetriNetError("duplicate transition identifiers")
        if set(self.places) & set(tids):
            raise PetriNetError("place and transition identifiers overlap")
        for t in self.transitions:
            if t.label is None and t.cls is not None:
                raise PetriNetError(f"hidden transition {t.tid} has a class")
            if t.label is not None and t.cls not in (INPUT_CLASS, OUTPUT_CLASS):
                raise PetriNetError(
                    f"labeled transition {t.tid} needs class %I or %Q, got {t.cls!r}")
        self._place_index = {p: i for i, p in enumerate(self.places)}
        tset = set(tids)
        pre: dict[str, list[int]] = {tid: [] for tid in tids}
        post: dict[str, list[int]] = {tid: [] for tid in tids}
        for src, dst in self.arcs:
            if src in self._place_index and dst in tset:
                pre[dst].append(self._place_index[src])
            elif src in tset and dst in self._place_index:
                post[src].append(self._place_index[dst])
            else:
                raise PetriNetError(f"arc ({src} -> {dst}) is not place<->transition")
        self._pre = {tid: tuple(sorted(v)) for tid, v in pre.items()}
        self._post = {tid: tuple(sorted(v)) for tid, v in post.items()}
        for name, m in (("initial", self.initial_marking), ("final", self.final_marking)):
            self._check_marking(m, name)
        self.initial_marking = tuple(self.initial_marking)
        self.final_marking = tuple(self.final_marking)

    def _check_marking(self, m: Sequence[int], what: str = "marking") -> None:
        if len(m) != len(self.places):
            raise DimensionError(
                f"{what} has {len(m)} entries for {len(self.places)} places")
        if any(v < 0 for v in m):
            raise PetriNetError(f"{what} has negative token counts")

    def transition(self, tid: str) -> Transition:
        for t in self.transitions:
            if t.tid == tid:
                return t
        raise PetriNetError(f"no transition {tid!r}")

    def preset(self, tid: str) -> tuple[int, ...]:
        return self._pre[tid]

    def postset(self, tid: str) -> tuple[int, ...]:
        return self._post[tid]

    @property
    def labels(self) -> set[str]:
        return {t.label for t in self.transitions if t.label is not None}

    def transitions_labeled(self, activity: str) -> list[Transition]:
        return [t for t in self.transitions if t.label == activity]

    @property
    def hidden_transitions(self) -> list[Transition]:
        return [t for t in self.transitions if t.label is None]


def enabled_transitions(net: LabeledPetriNet, marking: Sequence[int]) -> list[str]:
    """Transitions whose every input place holds a token, in canonical order.

    A transition with no input places is never enabled (discovery never
    produces one; treating it as permanently disabled keeps replay sane).
    """
    net._check_marking(marking)
    out = []
    for t in net.transitions:
        pre = net._pre[t.tid]
        if pre and all(marking[i] >= 1 for i in pre):
            out.append(t.tid)
    return out


def fire(net: LabeledPetriNet, marking: Sequence[int], tid: str) -> Marking:
    """Fire ``tid``: each input place loses a token, each output place gains one."""
    net._check_marking(marking)
    pre = net._pre.get(tid)
    if pre is None:
        raise PetriNetError(f"no transition {tid!r}")
    if not pre or any(marking[i] < 1 for i in pre):
        raise NotEnabledError(f"transition {tid!r} is not enabled")
    new = list(marking)
    for i in pre:
        new[i] -= 1
    for i in net._post[tid]:
        new[i] += 1
    return tuple(new)


def hidden_path_to_enable(
    net: LabeledPetriNet,
    marking: Sequence[int],
    targets: Iterable[str],
    max_depth: int = HIDDEN_SEARCH_DEPTH,
) -> tuple[list[str], str] | None:
    """Shortest hidden-only firing sequence after which some target is enabled.

    Breadth-first over hidden firings, bounded at ``max_depth``; ties resolve
    by canonical transition order (queue insertion order is canonical). Returns
    (hidden sequence, enabled target) or None.
    """
    target_set = list(targets)
    hidden = [t.tid for t in net.transitions if t.label is None]

    def first_enabled(m: Marking) -> str | None:
        for tid in target_set:
            pre = net._pre[tid]
            if pre and all(m[i] >= 1 for i in pre):
                return tid
        return None

    start = tuple(marking)
    hit = first_enabled(start)
    if hit is not None:
        return [], hit
    seen = {start}
    queue: deque[tuple[Marking, list[str]]] = deque([(start, [])])
    while queue:
        m, path = queue.popleft()
        if len(path) >= max_depth:
            continue
        for tid in hidden:
            pre = net._pre[tid]
            if not pre or any(m[i] < 1 for i in pre):
                continue
            nxt = fire(net, m, tid)
            if nxt in seen:
                continue
            seen.add(nxt)
            npath = path + [tid]
            hit = first_enabled(nxt)
            if hit is not None:
                return npath, hit
            queue.append((nxt, npath))
    return None


@dataclass
class ReplayResult:
    reached_final: bool
    fired_sequence: list[str]
    missing_tokens: int


def replay_trace(net: LabeledPetriNet, activities: Sequence[str]) -> ReplayResult:
    """Greedy token replay of an activity sequence from the initial marking.

    For each activity, fires a transition with that label, inserting hidden
    firings (shortest path, canonical tie-break) when needed. When no hidden
    path enables any candidate, tokens are force-inserted into the missing
    input places of the canonically first candidate and counted. After the
    last event the replay routes through hidden transitions toward the final
    marking if possible.
    """
    known = net.labels
    for a in activities:
        if a not in known:
            raise UnknownActivityError(f"no transition labeled {a!r}")

    marking = net.initial_marking
    fired: list[str] = []
    missing = 0
    for activity in activities:
        candidates = [t.tid for t in net.transitions_labeled(activity)]
        found = hidden_path_to_enable(net, marking, candidates)
        if found is not None:
            path, target = found
            for h in path:
                marking = fire(net, marking, h)
                fired.append(h)
            marking = fire(net, marking, target)
        else:
            # Force tokens into the first candidate's empty input places. A
            # source transition (no input places) just produces its outputs.
            target = candidates[0]
            m = list(marking)
            for i in net._pre[target]:
                if m[i] < 1:
                    m[i] += 1
                    missing += 1
            for i in net._post[target]:
                m[i] += 1
            for i in net._pre[target]:
                m[i] -= 1
            marking = tuple(m)
        fired.append(target)

    if marking != net.final_marking:
        tail = hidden_path_to_marking(net, marking, net.final_marking)
        if tail is not None:
            for h in tail:
                marking = fire(net, marking, h)
                fired.append(h)
    return ReplayResult(marking == net.final_marking, fired, missing)


def hidden_path_to_marking(
    net: LabeledPetriNet,
    marking: Marking,
    goal: Marking,
    max_depth: int = HIDDEN_SEARCH_DEPTH,
) -> list[str] | None:
    hidden = [t.tid for t in net.transitions if t.label is None]
    seen = {tuple(marking)}
    queue: deque[tuple[Marking, list[str]]] = deque([(tuple(marking), [])])
    while queue:
        m, path = queue.popleft()
        if len(path) >= max_depth:
            continue
        for tid in hidden:
            pre = net._pre[tid]
            if not pre or any(m[i] < 1 for i in pre):
                continue
            nxt = fire(net, m, tid)
            if nxt == goal:
                return path + [tid]
            if nxt in seen:
                continue
            seen.add(nxt)
            queue.append((nxt, path + [tid]))
    return None


# -- serialization ------------------------------------------------------------

def net_to_dict(net: LabeledPetriNet) -> dict:
    return {
        "places": list(net.places),
        "transitions": [
            {"id": t.tid, "label": t.label, "class": t.cls} for t in net.transitions
        ],
        "arcs": [{"from": s, "to": d} for s, d in sorted(net.arcs)],
        "initial_marking": list(net.initial_marking),
        "final_marking": list(net.final_marking),
    }


def net_from_dict(data: Mapping) -> LabeledPetriNet:
    return LabeledPetriNet(
        places=tuple(data["places"]),
        transitions=tuple(
            Transition(t["id"], t["label"], t["class"]) for t in data["transitions"]
        ),
        arcs=frozenset((a["from"], a["to"]) for a in data["arcs"]),
        initial_marking=tuple(data["initial_marking"]),
        final_marking=tuple(data["final_marking"]),
    )


def write_net(net: LabeledPetriNet, path) -> None:
    with open(path, "w") as fh:
        json.dump(net_to_dict(net), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_net(path) -> LabeledPetriNet:
    with open(path) as fh:
        return net_from_dict(json.load(fh))
