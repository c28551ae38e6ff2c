"""Petri-net discovery from event logs via a directly-follows graph.

The logs this pipeline sees are strictly sequential (same-tick components are
merged upstream), so discovery synthesizes a state-machine net with XOR
routing only: one place per activity plus a start and a final place, and one
labeled transition per retained DFG edge — the transition for edge a->b moves
the token from a's place to b's place and is labeled (and class-tagged) with
b. Multiple edges into the same activity therefore become multiple transitions
sharing a label, which is how XOR joins stay live in an ordinary net. Each
end-marked activity routes to the single final place through a hidden
transition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .logs import EventLog, activity_class
from .petri import LabeledPetriNet, Transition

START = "__start__"
END = "__end__"

START_PLACE = "p:START"
FINAL_PLACE = "p:FINAL"


class DiscoveryError(Exception):
    pass


@dataclass
class DirectlyFollowsGraph:
    nodes: set[str] = field(default_factory=set)
    edges: dict[tuple[str, str], int] = field(default_factory=dict)
    start_counts: dict[str, int] = field(default_factory=dict)
    end_counts: dict[str, int] = field(default_factory=dict)

    def successors(self, node: str) -> list[tuple[str, int]]:
        return sorted((dst, n) for (src, dst), n in self.edges.items() if src == node)


@dataclass(frozen=True)
class DiscoveryConfig:
    edge_filter_percentile: float = 0.0
    # Discovery trains on complete traces only by default: the power-on
    # transient starts from an arbitrary state and would add spurious start
    # routing. Criterion-free knob for noisy real-world logs.
    complete_only: bool = True

    def __post_init__(self):
        if not 0.0 <= self.edge_filter_percentile <= 1.0:
            raise DiscoveryError("edge_filter_percentile must be in [0, 1]")


def build_dfg(elog: EventLog) -> DirectlyFollowsGraph:
    """Count directly-follows pairs per trace, including START and END arcs."""
    dfg = DirectlyFollowsGraph()
    for trace in elog.traces:
        acts = trace.activities()
        if not acts:
            continue
        dfg.nodes.update(acts)
        dfg.start_counts[acts[0]] = dfg.start_counts.get(acts[0], 0) + 1
        dfg.end_counts[acts[-1]] = dfg.end_counts.get(acts[-1], 0) + 1
        pairs = ([(START, acts[0])]
                 + list(zip(acts, acts[1:]))
                 + [(acts[-1], END)])
        for pair in pairs:
            dfg.edges[pair] = dfg.edges.get(pair, 0) + 1
    return dfg


def filter_edges(dfg: DirectlyFollowsGraph, percentile: float) -> DirectlyFollowsGraph:
    """Prune each node's outgoing edges below the given frequency percentile.

    The most frequent outgoing edge of every node always survives, so the
    graph never loses its main path. percentile 0 keeps everything.
    """
    if percentile <= 0.0:
        return dfg
    kept: dict[tuple[str, str], int] = {}
    by_src: dict[str, list[tuple[tuple[str, str], int]]] = {}
    for edge, n in dfg.edges.items():
        by_src.setdefault(edge[0], []).append((edge, n))
    for src, out in by_src.items():
        freqs = sorted(n for _, n in out)
        # Linear-interpolated percentile over this node's frequencies.
        pos = percentile * (len(freqs) - 1)
        lo = int(pos)
        hi = min(lo + 1, len(freqs) - 1)
        cutoff = freqs[lo] + (freqs[hi] - freqs[lo]) * (pos - lo)
        best = max(n for _, n in out)
        for edge, n in out:
            if n >= cutoff or n == best:
                kept[edge] = n
    out_dfg = DirectlyFollowsGraph(
        nodes=set(dfg.nodes),
        edges=kept,
        start_counts=dict(dfg.start_counts),
        end_counts=dict(dfg.end_counts),
    )
    return out_dfg


def place_of(activity: str) -> str:
    return START_PLACE if activity == START else f"p:{activity}"


def transition_id(src: str, dst: str) -> str:
    return f"t:{src}>>{dst}"


def discover_net(elog: EventLog, cfg: DiscoveryConfig | None = None) -> LabeledPetriNet:
    """Synthesize a labeled state-machine net from the log's DFG.

    The class map tags every labeled transition %I or %Q from its activity's
    address prefix; the hidden end-routing transitions carry no label or
    class. Construction is fully order-canonical so the same log always
    serializes to the same bytes.
    """
    cfg = cfg or DiscoveryConfig()
    traces = elog.complete_traces if cfg.complete_only else elog.traces
    if not traces:
        traces = elog.traces
    if not traces or all(not t.events for t in traces):
        raise DiscoveryError("cannot discover a model from an empty log")
    dfg = filter_edges(build_dfg(EventLog(traces, elog.meta)),
                       cfg.edge_filter_percentile)

    activities = sorted(dfg.nodes)
    places = {START_PLACE, FINAL_PLACE} | {place_of(a) for a in activities}
    transitions: list[Transition] = []
    arcs: set[tuple[str, str]] = set()

    for (src, dst) in sorted(dfg.edges):
        if dst == END:
            tid = transition_id(src, END)
            transitions.append(Transition(tid, None, None))
            arcs.add((place_of(src), tid))
            arcs.add((tid, FINAL_PLACE))
        else:
            tid = transition_id(src, dst)
            transitions.append(Transition(tid, dst, activity_class(dst)))
            arcs.add((place_of(src), tid))
            arcs.add((tid, place_of(dst)))

    ordered_places = tuple(sorted(places))
    initial = tuple(1 if p == START_PLACE else 0 for p in ordered_places)
    final = tuple(1 if p == FINAL_PLACE else 0 for p in ordered_places)
    return LabeledPetriNet(
        places=ordered_places,
        transitions=tuple(transitions),
        arcs=frozenset(arcs),
        initial_marking=initial,
        final_marking=final,
    )


# -- structural isomorphism ----------------------------------------------------

def structurally_isomorphic(n1: LabeledPetriNet, n2: LabeledPetriNet) -> bool:
    """Label/class/marking-preserving bijection test via signature refinement.

    Node signatures start from local data (labels and classes for
    transitions, initial/final token counts for places) and are refined with
    neighbor signatures until stable; candidate bijections are then searched
    within equal-signature groups and verified arc-for-arc.
    """
    if (len(n1.places) != len(n2.places)
            or len(n1.transitions) != len(n2.transitions)
            or len(n1.arcs) != len(n2.arcs)):
        return False

    def adjacency(net):
        pin: dict[str, list[str]] = {p: [] for p in net.places}
        pout: dict[str, list[str]] = {p: [] for p in net.places}
        tin: dict[str, list[str]] = {t.tid: [] for t in net.transitions}
        tout: dict[str, list[str]] = {t.tid: [] for t in net.transitions}
        tids = {t.tid for t in net.transitions}
        for src, dst in net.arcs:
            if src in tids:
                tout[src].append(dst)
                pin[dst].append(src)
            else:
                pout[src].append(dst)
                tin[dst].append(src)
        return pin, pout, tin, tout

    def signatures(net):
        pin, pout, tin, tout = adjacency(net)
        pidx = {p: i for i, p in enumerate(net.places)}
        sig = {}
        for p in net.places:
            sig[p] = ("P", net.initial_marking[pidx[p]], net.final_marking[pidx[p]])
        for t in net.transitions:
            sig[t.tid] = ("T", t.label, t.cls)
        for _ in range(len(net.places) + len(net.transitions)):
            nxt = {}
            for p in net.places:
                nxt[p] = (sig[p],
                          tuple(sorted(sig[x] for x in pin[p])),
                          tuple(sorted(sig[x] for x in pout[p])))
            for t in net.transitions:
                nxt[t.tid] = (sig[t.tid],
                              tuple(sorted(sig[x] for x in tin[t.tid])),
                              tuple(sorted(sig[x] for x in tout[t.tid])))
            # Compress to keep tuples shallow.
            canon = {s: i for i, s in enumerate(sorted(set(nxt.values()), key=repr))}
            compressed = {k: (v[0][0] if isinstance(v[0], tuple) else v[0], canon[v])
                          for k, v in nxt.items()}
            if len(set(compressed.values())) == len(set(sig.values())):
                sig = compressed
                break
            sig = compressed
        return sig

    sig1, sig2 = signatures(n1), signatures(n2)
    places1 = sorted(n1.places, key=lambda p: repr(sig1[p]))
    places2 = sorted(n2.places, key=lambda p: repr(sig2[p]))
    trans1 = sorted((t.tid for t in n1.transitions), key=lambda t: repr(sig1[t]))
    trans2 = sorted((t.tid for t in n2.transitions), key=lambda t: repr(sig2[t]))
    if ([repr(sig1[p]) for p in places1] != [repr(sig2[p]) for p in places2]
            or [repr(sig1[t]) for t in trans1] != [repr(sig2[t]) for t in trans2]):
        return False

    # Group nodes by signature and search bijections within groups.
    def groups(order, sig):
        out: dict[str, list[str]] = {}
        for n in order:
            out.setdefault(repr(sig[n]), []).append(n)
        return out

    g1 = groups(places1 + trans1, sig1)
    g2 = groups(places2 + trans2, sig2)

    mapping: dict[str, str] = {}

    def verify() -> bool:
        mapped = {(mapping[s], mapping[d]) for s, d in n1.arcs}
        return mapped == set(n2.arcs)

    keys = sorted(g1)

    def assign(ki: int) -> bool:
        if ki == len(keys):
            return verify()
        key = keys[ki]
        cand1, cand2 = g1[key], g2[key]

        def perm(idx: int, used: set[str]) -> bool:
            if idx == len(cand1):
                return assign(ki + 1)
            for c in cand2:
                if c in used:
                    continue
                mapping[cand1[idx]] = c
                if perm(idx + 1, used | {c}):
                    return True
                del mapping[cand1[idx]]
            return False

        return perm(0, set())

    return assign(0)


# -- DOT export ------------------------------------------------------------------

def dfg_to_dot(dfg: DirectlyFollowsGraph) -> str:
    lines = ["digraph dfg {", "  rankdir=LR;"]
    for (src, dst), n in sorted(dfg.edges.items()):
        lines.append(f'  "{src}" -> "{dst}" [label="{n}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
