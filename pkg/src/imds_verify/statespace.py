"""Interleaving semantics of ground IMDS systems and breadth-first LTS construction."""
from __future__ import annotations

import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .model import Configuration, ElaboratedSystem, GroundAction, RuleId

DEFAULT_MAX_CONFIGS = 1_000_000


class TransitionLabel(NamedTuple):
    agent: int
    server: int
    rule_id: RuleId


@dataclass(frozen=True)
class ExplorationLimits:
    max_configs: Optional[int] = DEFAULT_MAX_CONFIGS
    max_edges: Optional[int] = None

    def __post_init__(self):
        for v in (self.max_configs, self.max_edges):
            if v is not None and v < 1:
                raise ValueError("exploration limits must be positive")

    @classmethod
    def from_env(cls, max_configs: Optional[int] = None) -> "ExplorationLimits":
        if max_configs is None:
            max_configs = int(os.environ.get("IMDS_MAX_STATES", DEFAULT_MAX_CONFIGS))
        return cls(max_configs=max_configs)


class Edge(NamedTuple):
    source: int
    label: TransitionLabel
    target: int


@dataclass(frozen=True)
class Lts:
    configs: tuple
    edges: tuple
    complete: bool

    def successors(self):
        out = [[] for _ in self.configs]
        for e in self.edges:
            out[e.source].append(e)
        return out

    def predecessors(self):
        out = [[] for _ in self.configs]
        for e in self.edges:
            out[e.target].append(e.source)
        return out


class ActionNotEnabled(ValueError):
    pass


class _Index:
    """Ground actions keyed by (server, state, agent, service), in canonical order."""

    def __init__(self, sys: ElaboratedSystem):
        self.table = {}
        for sid, acts in enumerate(sys.actions):
            for pos, a in enumerate(acts):
                key = (sid, a.state, a.agent, a.service)
                self.table.setdefault(key, []).append(((sid, pos), a))

    def enabled(self, cfg: Configuration) -> list:
        found = []
        states = cfg.states
        for agent, slot in enumerate(cfg.slots):
            if slot is None:
                continue
            server, service = slot
            found.extend(self.table.get((server, states[server], agent, service), ()))
        found.sort(key=lambda item: item[0])
        return [a for _, a in found]


_INDEX_CACHE: dict = {}


def _index(sys: ElaboratedSystem) -> _Index:
    idx = _INDEX_CACHE.get(id(sys))
    if idx is None or idx[0] is not sys:
        idx = (sys, _Index(sys))
        _INDEX_CACHE[id(sys)] = idx
    return idx[1]


def enabled_actions(cfg: Configuration, sys: ElaboratedSystem) -> list[GroundAction]:
    """Ground actions whose input pair matches ``cfg``.

    Ordered by server declaration order, then by position of the ground action
    within its server (rule order, then replicator valuation).
    """
    return _index(sys).enabled(cfg)


def is_enabled(cfg: Configuration, a: GroundAction) -> bool:
    return (cfg.slots[a.agent] == (a.server, a.service)
            and cfg.states[a.server] == a.state)


def step(cfg: Configuration, a: GroundAction, check: bool = True) -> Configuration:
    if check and not is_enabled(cfg, a):
        raise ActionNotEnabled(f"{a.rule_id} is not enabled")
    states = list(cfg.states)
    states[a.server] = a.out_state
    slots = list(cfg.slots)
    slots[a.agent] = None if a.out_server is None else (a.out_server, a.out_service)
    return Configuration(tuple(states), tuple(slots))


def _label(a: GroundAction) -> TransitionLabel:
    return TransitionLabel(a.agent, a.server, a.rule_id)


def _successors(index: _Index, cfg: Configuration):
    return [(_label(a), step(cfg, a, check=False)) for a in index.enabled(cfg)]


_WORKER_INDEX = None


def _worker_init(sys):
    global _WORKER_INDEX
    _WORKER_INDEX = _Index(sys)


def _worker_batch(cfgs):
    return [_successors(_WORKER_INDEX, c) for c in cfgs]


def explore(sys: ElaboratedSystem, limits: ExplorationLimits = ExplorationLimits(),
            jobs: int = 1) -> Lts:
    """Breadth-first construction of the reachable LTS.

    Configuration indices follow BFS discovery order under canonical action
    ordering; the result is the same for every ``jobs`` value.  Hitting a
    limit yields ``complete=False`` with the configurations discovered so far.
    """
    index = _index(sys)
    configs = [sys.initial]
    seen = {sys.initial: 0}
    edges = []
    max_c, max_e = limits.max_configs, limits.max_edges

    pool = None
    if jobs > 1:
        pool = ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init, initargs=(sys,))
    try:
        layer = [0]
        while layer:
            cfgs = [configs[i] for i in layer]
            if pool is not None and len(cfgs) > 1:
                size = -(-len(cfgs) // jobs)
                batches = [cfgs[k:k + size] for k in range(0, len(cfgs), size)]
                succ = [s for part in pool.map(_worker_batch, batches) for s in part]
            else:
                succ = [_successors(index, c) for c in cfgs]
            next_layer = []
            for src, outs in zip(layer, succ):
                for label, nxt in outs:
                    tgt = seen.get(nxt)
                    if tgt is None:
                        if max_c is not None and len(configs) >= max_c:
                            return Lts(tuple(configs), tuple(edges), False)
                        tgt = len(configs)
                        seen[nxt] = tgt
                        configs.append(nxt)
                        next_layer.append(tgt)
                    if max_e is not None and len(edges) >= max_e:
                        return Lts(tuple(configs), tuple(edges), False)
                    edges.append(Edge(src, label, tgt))
            layer = next_layer
    finally:
        if pool is not None:
            pool.shutdown()
    return Lts(tuple(configs), tuple(edges), True)


@dataclass(frozen=True)
class LtsStats:
    configs: int
    edges: int
    terminal: int
    complete: bool

    def as_dict(self) -> dict:
        return {"configs": self.configs, "edges": self.edges,
                "terminal": self.terminal, "complete": self.complete}


def stats(lts: Lts) -> LtsStats:
    has_out = {e.source for e in lts.edges}
    terminal = sum(1 for i in range(len(lts.configs)) if i not in has_out)
    return LtsStats(len(lts.configs), len(lts.edges), terminal, lts.complete)


def parent_tree(lts: Lts) -> list:
    """For each configuration, the edge through which BFS first reached it."""
    parent = [None] * len(lts.configs)
    for e in lts.edges:
        if e.target != 0 and parent[e.target] is None:
            parent[e.target] = e
    return parent


def path_to(lts: Lts, target: int, parent=None) -> list:
    parent = parent or parent_tree(lts)
    path = []
    while target != 0:
        e = parent[target]
        path.append(e)
        target = e.source
    path.reverse()
    return path
