import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plcmine.petri import (DimensionError, LabeledPetriNet, NotEnabledError,
                           Transition, UnknownActivityError, enabled_transitions,
                           fire, net_from_dict, net_to_dict, replay_trace)


def chain_net():
    """Transition a feeds place p feeds transition b; no other places."""
    return LabeledPetriNet(
        places=("p",),
        transitions=(Transition("a", "%IX0.0_true", "%I"),
                     Transition("b", "%QX0.0_true", "%Q")),
        arcs=frozenset({("a", "p"), ("p", "b")}),
        initial_marking=(0,),
        final_marking=(0,),
    )


def test_single_input_enablement():
    net = chain_net()
    assert enabled_transitions(net, (1,)) == ["b"]


def test_no_tokens_nothing_enabled():
    net = chain_net()
    assert enabled_transitions(net, (0,)) == []


def test_source_transition_is_not_enabled():
    # "a" has no input places: never reported enabled.
    net = chain_net()
    assert "a" not in enabled_transitions(net, (1,))


def test_fire_consumes_token():
    net = chain_net()
    m = fire(net, (1,), "b")
    assert m == (0,)


def test_fire_is_pure():
    net = chain_net()
    m0 = (1,)
    fire(net, m0, "b")
    assert m0 == (1,)


def test_fire_two_inputs_one_output():
    net = LabeledPetriNet(
        places=("p1", "p2", "q"),
        transitions=(Transition("t", "%QX0.0_true", "%Q"),),
        arcs=frozenset({("p1", "t"), ("p2", "t"), ("t", "q")}),
        initial_marking=(0, 0, 0),
        final_marking=(0, 0, 0),
    )
    m = fire(net, (1, 1, 0), "t")
    assert m == (0, 0, 1)
    assert sum(m) - 2 == 1 - 2  # net token change is |outputs| - |inputs|


def test_fire_disabled_raises():
    net = chain_net()
    with pytest.raises(NotEnabledError):
        fire(net, (0,), "b")


def test_marking_dimension_error():
    net = chain_net()
    with pytest.raises(DimensionError):
        enabled_transitions(net, (1, 0))


def test_replay_exact_fit():
    net = chain_net()
    res = replay_trace(net, ["%IX0.0_true", "%QX0.0_true"])
    assert res.reached_final
    assert res.missing_tokens == 0
    assert res.fired_sequence == ["a", "b"]


def test_replay_force_insert():
    net = chain_net()
    res = replay_trace(net, ["%QX0.0_true"])
    assert res.missing_tokens == 1


def test_replay_unknown_activity():
    net = chain_net()
    with pytest.raises(UnknownActivityError, match="nonsense"):
        replay_trace(net, ["nonsense"])


def test_replay_scenario1_trace_reaches_final(scenario1):
    trace = scenario1.elog.complete_traces[0]
    assert len(trace.events) == 8
    res = replay_trace(scenario1.net, trace.activities())
    assert res.reached_final
    assert res.missing_tokens == 0


def test_scenario1_initial_enablement_is_single_fill_command(scenario1):
    net = scenario1.net
    enabled = enabled_transitions(net, net.initial_marking)
    assert len(enabled) == 1
    t = net.transition(enabled[0])
    assert t.cls == "%Q"
    assert t.label == "%QX0.0_true+%QX0.1_false"


def test_replay_determinism(scenario2):
    trace = scenario2.elog.complete_traces[0].activities()
    a = replay_trace(scenario2.net, trace)
    b = replay_trace(scenario2.net, trace)
    assert a.fired_sequence == b.fired_sequence


def test_serialization_round_trip(scenario2):
    net = scenario2.net
    data = net_to_dict(net)
    back = net_from_dict(json.loads(json.dumps(data)))
    assert back.places == net.places
    assert back.transitions == net.transitions
    assert back.arcs == net.arcs
    assert back.initial_marking == net.initial_marking
    assert back.final_marking == net.final_marking


# -- randomized structural properties ------------------------------------------


@st.composite
def random_nets_with_marking(draw):
    n_places = draw(st.integers(2, 6))
    n_trans = draw(st.integers(1, 5))
    places = tuple(f"p{i}" for i in range(n_places))
    transitions = []
    arcs = set()
    for j in range(n_trans):
        tid = f"t{j}"
        transitions.append(Transition(tid, f"%IX0.{j}_true", "%I"))
        pre = draw(st.lists(st.sampled_from(places), min_size=1, max_size=3,
                            unique=True))
        post = draw(st.lists(st.sampled_from(places), min_size=1, max_size=3,
                             unique=True))
        arcs.update((p, tid) for p in pre)
        arcs.update((tid, p) for p in post)
    marking = tuple(draw(st.integers(0, 2)) for _ in places)
    net = LabeledPetriNet(places=places, transitions=tuple(transitions),
                          arcs=frozenset(arcs),
                          initial_marking=(0,) * n_places,
                          final_marking=(0,) * n_places)
    return net, marking


@given(random_nets_with_marking())
@settings(max_examples=100, deadline=None)
def test_firing_is_local_and_conservative(net_and_marking):
    net, marking = net_and_marking
    for tid in enabled_transitions(net, marking):
        new = fire(net, marking, tid)
        pre, post = set(net.preset(tid)), set(net.postset(tid))
        assert sum(new) - sum(marking) == len(post) - len(pre)
        for i in range(len(net.places)):
            if i not in pre | post:
                assert new[i] == marking[i]


@given(random_nets_with_marking())
@settings(max_examples=100, deadline=None)
def test_enablement_consistent_after_fire(net_and_marking):
    net, marking = net_and_marking
    for tid in enabled_transitions(net, marking):
        new = fire(net, marking, tid)
        for other in enabled_transitions(net, new):
            pre = net.preset(other)
            assert all(new[i] >= 1 for i in pre)
