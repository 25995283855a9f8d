"""Deadlock and termination detection over a complete LTS.

An agent is dead in a configuration when no path from there ever contains a
transition of that agent; a server is dead when it holds a pending message
and can never execute again.  Waiting alone is not a fault.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .model import ElaboratedSystem
from .statespace import Edge, Lts, parent_tree, path_to

RESOURCE = "resource"
COMMUNICATION = "communication"
PARTIAL = "partial"
TOTAL = "total"


class IncompleteLtsError(ValueError):
    """Raised when analysis is asked for on a truncated state space."""


@dataclass(frozen=True)
class ProgressSets:
    agents: tuple  # per agent: frozenset of config indices
    servers: tuple


@dataclass(frozen=True)
class WitnessPath:
    steps: tuple  # Edge(source, label, target), from config 0

    @property
    def end(self) -> int:
        return self.steps[-1].target if self.steps else 0

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class DeadlockReport:
    kind: str
    scope: str  # over agents: total when every non-terminated agent is dead
    server_scope: str  # over servers: partial when not every server is dead
    dead_agents: tuple  # agent ids, ascending
    dead_servers: tuple  # server ids, ascending
    agent_kinds: tuple  # (agent id, kind) per dead agent
    witness: WitnessPath
    config: int

    @property
    def signature(self):
        return self.dead_agents, self.dead_servers


def _require_complete(lts: Lts):
    if not lts.complete:
        raise IncompleteLtsError("deadlock analysis needs a complete state space; "
                                 "raise the exploration limit")


def _backward_closure(seeds, preds) -> frozenset:
    seen = set(seeds)
    queue = deque(seeds)
    while queue:
        c = queue.popleft()
        for p in preds[c]:
            if p not in seen:
                seen.add(p)
                queue.append(p)
    return frozenset(seen)


def progress_sets(lts: Lts, n_agents: int, n_servers: int) -> ProgressSets:
    _require_complete(lts)
    preds = lts.predecessors()
    agent_seeds = [set() for _ in range(n_agents)]
    server_seeds = [set() for _ in range(n_servers)]
    for e in lts.edges:
        agent_seeds[e.label.agent].add(e.source)
        server_seeds[e.label.server].add(e.source)
    return ProgressSets(
        agents=tuple(_backward_closure(sorted(s), preds) for s in agent_seeds),
        servers=tuple(_backward_closure(sorted(s), preds) for s in server_seeds))


def dead_sets(index: int, lts: Lts, ps: ProgressSets):
    cfg = lts.configs[index]
    agents = tuple(a for a, slot in enumerate(cfg.slots)
                   if slot is not None and index not in ps.agents[a])
    waiting = {slot[0] for slot in cfg.slots if slot is not None}
    servers = tuple(s for s in sorted(waiting) if index not in ps.servers[s])
    return agents, servers


def classify(dead_agents, dead_servers, cfg, sys: ElaboratedSystem) -> dict:
    """Kind per dead entity: ``("agent", id)`` or ``("server", id)`` -> kind.

    A dead agent whose pending service is accepted by some ground action of the
    target server waits for a state that never comes (resource); if no action
    accepts it at all the wait is a communication fault.  Dead servers are the
    communication view.
    """
    out = {}
    for a in dead_agents:
        server, service = cfg.slots[a]
        accepted = any(g.agent == a and g.service == service for g in sys.actions[server])
        out[("agent", a)] = RESOURCE if accepted else COMMUNICATION
    for s in dead_servers:
        out[("server", s)] = COMMUNICATION
    return out


def _scope(cfg, dead_agents) -> str:
    live = [a for a, slot in enumerate(cfg.slots) if slot is not None]
    return TOTAL if live and set(live) <= set(dead_agents) else PARTIAL


def signatures(lts: Lts, ps: ProgressSets) -> list:
    return [dead_sets(i, lts, ps) for i in range(len(lts.configs))]


def maximal_signatures(lts: Lts, sigs: list) -> set:
    """Signatures that cannot grow any further from some configuration.

    Dead sets only grow along paths, so a signature is maximal at ``c`` when
    every configuration reachable from ``c`` shows the same signature.
    """
    unstable = [e.source for e in lts.edges if sigs[e.source] != sigs[e.target]]
    unstable = _backward_closure(sorted(set(unstable)), lts.predecessors())
    return {sigs[i] for i in range(len(sigs)) if i not in unstable}


def find_deadlocks(lts: Lts, sys: ElaboratedSystem) -> list[DeadlockReport]:
    """One report per maximal (dead agents, dead servers) signature.

    Each report is taken at the BFS-earliest configuration showing the
    signature, so its witness is a shortest path; reports come out ordered by
    witness length, then configuration index.
    """
    _require_complete(lts)
    ps = progress_sets(lts, len(sys.agents), len(sys.servers))
    sigs = signatures(lts, ps)
    wanted = maximal_signatures(lts, sigs)
    parent = parent_tree(lts)
    reports, seen = [], set()
    for index, cfg in enumerate(lts.configs):
        agents, servers = sigs[index]
        if not agents and not servers:
            continue
        if (agents, servers) in seen or (agents, servers) not in wanted:
            continue
        seen.add((agents, servers))
        kinds = classify(agents, servers, cfg, sys)
        witness = WitnessPath(tuple(path_to(lts, index, parent)))
        reports.append(DeadlockReport(
            kind=COMMUNICATION if servers else RESOURCE,
            scope=_scope(cfg, agents),
            server_scope=TOTAL if len(servers) == len(sys.servers) else PARTIAL,
            dead_agents=agents, dead_servers=servers,
            agent_kinds=tuple((a, kinds[("agent", a)]) for a in agents),
            witness=witness, config=index))
    reports.sort(key=lambda r: (len(r.witness), r.config))
    return reports


def detect_termination(lts: Lts) -> list[int]:
    return [i for i, cfg in enumerate(lts.configs) if all(s is None for s in cfg.slots)]
