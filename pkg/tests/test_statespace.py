import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from conftest import ALL_FIXTURES, load
from imds_verify.statespace import (ActionNotEnabled, ExplorationLimits, enabled_actions,
                                    explore, parent_tree, path_to, stats, step)

# (configs, edges, terminal) fixed by the brute-force oracle
EXPECTED = {
    "minimal.imds": (2, 1, 1),
    "two_amp.imds": (228, 376, 5),
    "two_amp_verbatim.imds": (228, 376, 5),
    "corridor.amg": (5, 4, 1),
    "single_amp.amg": (14, 13, 1),
    "road_noavoid.amg": (67, 112, 4),
    "road_avoid.amg": (210, 364, 3),
}


def _as_sets(lts):
    configs = {(c.states, c.slots) for c in lts.configs}
    edges = set()
    for e in lts.edges:
        s, t = lts.configs[e.source], lts.configs[e.target]
        edges.add(((s.states, s.slots), (e.label.agent, e.label.server, e.label.rule_id),
                   (t.states, t.slots)))
    return configs, edges


@pytest.mark.parametrize("name", ALL_FIXTURES)
def test_oracle_frozen_counts(name, systems):
    configs, edges, _ = oracle.reachable(systems[name])
    stuck = sum(1 for c in configs if not oracle.successors(systems[name], c))
    assert (len(configs), len(edges), stuck) == EXPECTED[name]


@pytest.mark.parametrize("name", ALL_FIXTURES)
def test_lts_equals_oracle(name, systems):
    sys = systems[name]
    lts = explore(sys)
    assert lts.complete
    configs, edges, _ = oracle.reachable(sys)
    assert _as_sets(lts) == (configs, edges)
    assert len(lts.edges) == len(edges)
    st_ = stats(lts)
    assert (st_.configs, st_.edges, st_.terminal) == EXPECTED[name]


def test_enabled_actions_are_canonically_ordered(systems):
    sys = systems["two_amp.imds"]
    for cfg in explore(sys).configs:
        acts = enabled_actions(cfg, sys)
        keys = [(a.server, sys.actions[a.server].index(a)) for a in acts]
        assert keys == sorted(keys)


def test_step_rejects_disabled_action(systems):
    sys = systems["minimal.imds"]
    (a,) = sys.all_actions()
    done = step(sys.initial, a)
    with pytest.raises(ActionNotEnabled):
        step(done, a)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(ALL_FIXTURES), st.lists(st.integers(0, 1000), max_size=40))
def test_frame_and_message_conservation(name, choices):
    """Each step touches one server state and one agent slot; pending messages never multiply."""
    sys = load(name)
    cfg = sys.initial
    for c in choices:
        acts = enabled_actions(cfg, sys)
        if not acts:
            break
        a = acts[c % len(acts)]
        nxt = step(cfg, a)
        changed_states = [i for i, (x, y) in enumerate(zip(cfg.states, nxt.states)) if x != y]
        changed_slots = [i for i, (x, y) in enumerate(zip(cfg.slots, nxt.slots)) if x != y]
        assert set(changed_states) <= {a.server}
        assert set(changed_slots) <= {a.agent}
        pending = sum(s is not None for s in cfg.slots)
        assert sum(s is not None for s in nxt.slots) == pending - (1 if a.terminates else 0)
        cfg = nxt


@pytest.mark.parametrize("name", ["two_amp.imds", "road_avoid.amg"])
def test_parallel_exploration_is_identical(name, systems):
    sys = systems[name]
    assert explore(sys, jobs=1) == explore(sys, jobs=3)


@pytest.mark.parametrize("limit", [1, 2, 5, 50, 227])
def test_truncation_is_a_prefix(limit, systems):
    sys = systems["two_amp.imds"]
    full = explore(sys)
    part = explore(sys, ExplorationLimits(max_configs=limit))
    assert not part.complete
    assert len(part.configs) == limit
    assert part.configs == full.configs[:limit]
    assert set(part.edges) <= set(full.edges)


def test_truncation_monotone_and_exact_limit_completes(systems):
    sys = systems["two_amp.imds"]
    sizes = [len(explore(sys, ExplorationLimits(max_configs=k)).edges) for k in (10, 40, 160)]
    assert sizes == sorted(sizes)
    assert explore(sys, ExplorationLimits(max_configs=228)).complete


def test_edge_limit(systems):
    lts = explore(systems["two_amp.imds"], ExplorationLimits(max_configs=None, max_edges=10))
    assert not lts.complete and len(lts.edges) == 10


def test_limits_from_environment(monkeypatch):
    monkeypatch.setenv("IMDS_MAX_STATES", "7")
    assert ExplorationLimits.from_env().max_configs == 7
    assert ExplorationLimits.from_env(3).max_configs == 3
    with pytest.raises(ValueError):
        ExplorationLimits(max_configs=0)


def test_parent_tree_gives_shortest_paths(systems):
    sys = systems["road_avoid.amg"]
    lts = explore(sys)
    _, _, dist = oracle.reachable(sys)
    parent = parent_tree(lts)
    for i, cfg in enumerate(lts.configs):
        path = path_to(lts, i, parent)
        assert len(path) == dist[(cfg.states, cfg.slots)]
        replay = sys.initial
        for e in path:
            replay = step(replay, sys.action(e.label.rule_id))
        assert replay == cfg


def test_worker_pool_is_exercised(monkeypatch, systems):
    import imds_verify.statespace as ss
    batches = []

    class Counting(ss.ProcessPoolExecutor):
        def map(self, fn, *iterables, **kw):
            items = list(iterables[0])
            batches.append(len(items))
            return super().map(fn, items, **kw)

    monkeypatch.setattr(ss, "ProcessPoolExecutor", Counting)
    sys = systems["two_amp.imds"]
    assert ss.explore(sys, jobs=8) == ss.explore(sys)
    assert batches and max(batches) > 1
