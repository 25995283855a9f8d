"""Server view (communication graph) and agent view (sequence diagram) of a path."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple

from .model import ElaboratedSystem

_INDEXED = re.compile(r"^(.*)\[([0-9]+)\]$")


def rename_agents(sys: ElaboratedSystem) -> dict:
    """Display names: ``AMP[1]`` -> ``AMP``, ``AMP[k]`` -> ``AMP__{k-1}``."""
    names, used = {}, set()
    for aid, flat in enumerate(sys.agents):
        m = _INDEXED.match(flat)
        if m is None:
            name = flat
        else:
            base, k = m.group(1), int(m.group(2))
            name = base if k == 1 else f"{base}__{k - 1}"
        while name in used:
            name += "_"
        used.add(name)
        names[aid] = name
    return names


def _steps(path):
    return tuple(getattr(path, "steps", path))


class CommEdge(NamedTuple):
    sender: str
    receiver: str
    agent: str
    service: str
    step: int


@dataclass(frozen=True)
class CommGraph:
    nodes: tuple  # server names, first-appearance order
    edges: tuple  # CommEdge, path order
    dead: tuple  # highlighted server names
    transitions: tuple  # labels the graph was built from


def _touched(steps, sys):
    order = []

    def see(sid):
        if sid not in order:
            order.append(sid)

    for slot in sys.initial.slots:
        if slot is not None:
            see(slot[0])
    for e in steps:
        a = sys.action(e.label.rule_id)
        see(a.server)
        if not a.terminates:
            see(a.out_server)
    return order


def server_view(path, sys: ElaboratedSystem, dead_servers=()) -> CommGraph:
    steps = _steps(path)
    names = rename_agents(sys)
    edges = []
    for k, e in enumerate(steps, start=1):
        a = sys.action(e.label.rule_id)
        if a.terminates:
            continue
        target = sys.servers[a.out_server]
        edges.append(CommEdge(sys.servers[a.server].name, target.name, names[a.agent],
                              target.services[a.out_service], k))
    nodes = tuple(sys.servers[s].name for s in _touched(steps, sys))
    dead = tuple(sys.servers[s].name for s in sorted(dead_servers))
    return CommGraph(nodes, tuple(edges), dead, tuple(e.label for e in steps))


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: CommGraph, name: str = "server_view") -> str:
    lines = [f"digraph {name} {{", "  node [shape=box];"]
    for n in graph.nodes:
        if n in graph.dead:
            lines.append(f"  {_quote(n)} [style=filled, fillcolor=salmon, penwidth=2];")
        else:
            lines.append(f"  {_quote(n)};")
    for e in graph.edges:
        label = f"{e.step}: {e.agent}.{e.service}"
        lines.append(f"  {_quote(e.sender)} -> {_quote(e.receiver)} [label={_quote(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


class Event(NamedTuple):
    step: int
    kind: str  # "recv", "send", "state", "end", "blocked"
    lifeline: str
    label: str  # "agent.service" for messages, state name for "state"
    target: str = ""


@dataclass(frozen=True)
class SequenceDiagram:
    lifelines: tuple
    events: tuple
    transitions: tuple

    def arrows(self):
        return [e for e in self.events if e.kind == "send"]


def agent_view(path, sys: ElaboratedSystem, dead_agents=()) -> SequenceDiagram:
    steps = _steps(path)
    names = rename_agents(sys)
    touched = set(_touched(steps, sys))
    lifelines = tuple(s.name for sid, s in enumerate(sys.servers) if sid in touched)
    events = []
    cfg_states = list(sys.initial.states)
    slots = list(sys.initial.slots)
    for k, e in enumerate(steps, start=1):
        a = sys.action(e.label.rule_id)
        srv = sys.servers[a.server]
        agent = names[a.agent]
        events.append(Event(k, "recv", srv.name, f"{agent}.{srv.services[a.service]}"))
        if a.terminates:
            events.append(Event(k, "end", srv.name, agent))
            slots[a.agent] = None
        else:
            target = sys.servers[a.out_server]
            events.append(Event(k, "send", srv.name,
                                f"{agent}.{target.services[a.out_service]}", target.name))
            slots[a.agent] = (a.out_server, a.out_service)
        if cfg_states[a.server] != a.out_state:
            events.append(Event(k, "state", srv.name, srv.states[a.out_state]))
        cfg_states[a.server] = a.out_state
    for aid in sorted(dead_agents):
        slot = slots[aid]
        if slot is None:
            continue
        srv = sys.servers[slot[0]]
        events.append(Event(len(steps), "blocked", srv.name,
                            f"{names[aid]}.{srv.services[slot[1]]}"))
    return SequenceDiagram(lifelines, tuple(events), tuple(e.label for e in steps))


def render_sequence(diagram: SequenceDiagram) -> str:
    width = max((len(n) for n in diagram.lifelines), default=0)
    lines = ["lifelines: " + " | ".join(diagram.lifelines), "step  event"]
    for ev in diagram.events:
        who = ev.lifeline.ljust(width)
        if ev.kind == "recv":
            text = f"{who} <-({ev.label})"
        elif ev.kind == "send":
            text = f"{who} ->({ev.label}) {ev.target}"
        elif ev.kind == "state":
            text = f"{who} := {ev.label}"
        elif ev.kind == "end":
            text = f"{who} ## {ev.label} terminates"
        else:
            text = f"{who} !! {ev.label} waits forever"
        lines.append(f"{ev.step:>4}  {text}")
    return "\n".join(lines) + "\n"
