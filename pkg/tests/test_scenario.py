import warnings
from collections import deque

import pytest

from conftest import AMG_FIXTURES, FIXTURES, load
from imds_verify.deadlock import TOTAL, detect_termination, find_deadlocks
from imds_verify.model import elaborate, validate
from imds_verify.scenario import (GenOptions, ScenarioError, ScenarioWarning, format_graph,
                                  generate, parse_graph)
from imds_verify.statespace import explore

ROAD = FIXTURES.joinpath("road_avoid.amg").read_text()


def test_parse_road():
    graph, its, opts = parse_graph(ROAD)
    assert [n for n, _ in graph.nodes] == ["lotE1", "mE1", "mM", "mE2", "lotE2", "lotM"]
    assert graph.kind("mM") == "marker" and graph.kind("lotM") == "lot"
    assert graph.neighbors("mM") == ["mE1", "mE2", "lotM"]
    assert dict(graph.parking) == {"mM": "lotM"}
    assert [it.agent for it in its] == ["AMP[1]", "AMP[2]"]
    assert opts.avoidance


def test_format_graph_round_trip():
    parsed = parse_graph(ROAD)
    assert parse_graph(format_graph(*parsed)) == parsed


@pytest.mark.parametrize("text, where, fragment", [
    ("node a lot\nnode b lot\nedge a b\nitinerary X: a -> c", (4, 1), "unknown node 'c'"),
    ("node a lot\nnode m marker\nnode b lot\nedge a m\nedge m b\nitinerary X: a -> b",
     (6, 1), "does not follow an edge"),
    ("node a lot\n  node a marker", (2, 3), "declared twice"),
    ("node a lot\nnode m marker\nnode b lot\nedge a m\nparking m b", (5, 1), "not adjacent"),
    ("node a lot\nbogus", (2, 1), "unknown directive"),
    ("node a lot\nnode m marker\nedge a m\nitinerary X: a -> m", (4, 1), "end at a lot"),
])
def test_scenario_errors_are_located(text, where, fragment):
    with pytest.raises(ScenarioError) as info:
        parse_graph(text)
    assert (info.value.line, info.value.column) == where
    assert fragment in info.value.message


@pytest.mark.parametrize("name", AMG_FIXTURES)
def test_generated_models_validate(name):
    decl = generate(*parse_graph(FIXTURES.joinpath(name).read_text()))
    assert [d for d in validate(decl) if d.severity == "error"] == []
    sys = elaborate(decl)
    assert len(sys.servers) == len(decl.servers)


def test_road_shape():
    sys = load("road_avoid.amg")
    assert len(sys.servers) == 6 and sys.agents == ("AMP[1]", "AMP[2]")
    reports = find_deadlocks(explore(sys), sys)
    assert any(len(r.dead_servers) == 2 for r in reports)


def _holder_audit(sys):
    """Replay every path, tracking which agent holds each node.

    A node is taken when it leaves ``free`` and released when it returns
    there.  Checks: only the holder changes a held node, only the holder
    releases it, and an agent never releases its last node.
    """
    lts = explore(sys)
    free = [srv.states.index("free") for srv in sys.servers]
    holders = [None] * len(sys.servers)
    for sid, st in enumerate(sys.initial.states):
        if st != free[sid]:
            holders[sid] = next(a for a, slot in enumerate(sys.initial.slots)
                                if slot is not None and slot[0] == sid)
    start = (0, tuple(holders))
    seen, queue = {start}, deque([start])
    succ = lts.successors()
    while queue:
        cfg, holders = queue.popleft()
        for e in succ[cfg]:
            a = sys.action(e.label.rule_id)
            h = list(holders)
            before, after = a.state, a.out_state
            if before == free[a.server] and after != free[a.server]:
                assert h[a.server] is None
                h[a.server] = a.agent
            elif before != free[a.server] and after == free[a.server]:
                assert h[a.server] == a.agent, "released by a non-holder"
                assert h.count(a.agent) >= 2, "released before the next node was taken"
                h[a.server] = None
            elif before != after:
                assert h[a.server] == a.agent, "held node changed by another agent"
            assert all(h.count(x) <= 2 for x in range(len(sys.agents)))
            nxt = (e.target, tuple(h))
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen)


@pytest.mark.parametrize("name", AMG_FIXTURES)
def test_resource_safety_and_acquire_before_release(name):
    assert _holder_audit(load(name)) >= len(explore(load(name)).configs)


def _signatures(name):
    sys = load(name)
    return {tuple(sys.servers[s].name for s in r.dead_servers): r
            for r in find_deadlocks(explore(sys), sys)}


def test_avoidance_removes_head_on_at_middle_marker():
    off, on = _signatures("road_noavoid.amg"), _signatures("road_avoid.amg")
    head_on = {("mE1", "mM"), ("mM", "mE2")}
    assert head_on <= set(off)
    assert all(off[k].scope == TOTAL for k in head_on)
    assert not head_on & set(on)
    # lot/marker conflicts at the road ends remain, as in the hand-written model
    assert set(on) == {("lotE1", "mE1"), ("mE2", "lotE2")}


def test_avoidance_lets_both_finish():
    sys = load("road_avoid.amg")
    assert len(detect_termination(explore(sys))) == 1
    assert len(detect_termination(explore(load("road_noavoid.amg")))) == 0


def test_single_itinerary_terminates():
    sys = load("single_amp.amg")
    lts = explore(sys)
    assert find_deadlocks(lts, sys) == [] and len(detect_termination(lts)) == 1


def test_same_direction_traffic_does_not_divert():
    text = ROAD.replace("itinerary AMP[2]: lotE2 -> mE2 -> mM -> mE1 -> lotE1",
                        "itinerary AMP[2]: lotM -> mM -> mE2 -> lotE2")
    decl = generate(*parse_graph(text))
    services = {d.name for t in decl.server_types for d in t.services}
    assert not any(s.startswith("not_") for s in services)


def test_avoidance_without_parking_warns():
    text = ROAD.replace("parking mM lotM\n", "")
    with pytest.warns(ScenarioWarning):
        generate(*parse_graph(text))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        generate(*parse_graph(text)[:2], GenOptions(avoidance=False))


def test_agent_arrays_must_be_contiguous():
    text = ROAD.replace("AMP[2]:", "AMP[3]:")
    with pytest.raises(ScenarioError):
        parse_graph(text)
