"""Compile an environmental resource graph plus itineraries into an IMDS model.

Every node becomes a server.  An agent moves from ``u`` to ``v`` with three
messages: ``try`` from ``u`` to ``v`` (accepted only when ``v`` is free, which
reserves it), ``ok`` back to ``u``, then ``take`` to ``v``, which releases
``u``.  ``v`` then sends the next ``try`` or terminates the agent at its last
lot.  Node states record the direction the holder will leave in
(``occ_<next>``/``res_<next>``, or ``occ``/``res`` at the destination), which
is what lets a node recognise head-on traffic.

With avoidance on, a node held by an agent heading towards a marker ``m``
answers a ``try`` coming from ``m`` with ``not`` when ``m`` has a parking lot;
the agent at ``m`` then parks, frees ``m`` and later comes back to ``m``.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

from .model import (ActionRule, Decl, MessageInit, MessagePattern, Num, Range, Ref,
                    ServerInit, ServerType, StatePattern, SystemDecl, validate)

LOT = "lot"
MARKER = "marker"


class ScenarioError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class ScenarioWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ResourceGraph:
    nodes: tuple  # (name, kind)
    edges: tuple  # (a, b), undirected
    parking: tuple = ()  # (marker, lot)

    def kind(self, name: str) -> str:
        return dict(self.nodes)[name]

    def neighbors(self, name: str) -> list:
        out = []
        for node, _ in self.nodes:
            if (name, node) in self.edges or (node, name) in self.edges:
                out.append(node)
        return out

    def adjacent(self, a: str, b: str) -> bool:
        return (a, b) in self.edges or (b, a) in self.edges


@dataclass(frozen=True)
class Itinerary:
    agent: str
    path: tuple


@dataclass(frozen=True)
class GenOptions:
    avoidance: bool = False


# --- scenario files --------------------------------------------------------

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_AGENT_RE = re.compile(rf"^({_NAME})(?:\[([0-9]+)\])?$")


def parse_graph(text: str):
    """Read a ``.amg`` scenario; returns ``(graph, itineraries, options)``."""
    nodes, edges, parking, itineraries = [], [], [], []
    options = GenOptions()
    where = {}  # entity -> (line, column) for later checks
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        col = len(line) - len(line.lstrip()) + 1
        words = line.split()
        head = words[0]
        if head == "node":
            if len(words) != 3 or words[2] not in (LOT, MARKER):
                raise ScenarioError("expected 'node <name> lot|marker'", lineno, col)
            _check_name(words[1], lineno, col)
            if words[1] in dict(nodes):
                raise ScenarioError(f"node '{words[1]}' declared twice", lineno, col)
            nodes.append((words[1], words[2]))
        elif head == "edge":
            if len(words) != 3:
                raise ScenarioError("expected 'edge <name> <name>'", lineno, col)
            edges.append((words[1], words[2]))
            where[("edge", len(edges) - 1)] = (lineno, col)
        elif head == "parking":
            if len(words) != 3:
                raise ScenarioError("expected 'parking <marker> <lot>'", lineno, col)
            parking.append((words[1], words[2]))
            where[("parking", len(parking) - 1)] = (lineno, col)
        elif head == "itinerary":
            m = re.match(r"^\s*itinerary\s+(\S+?)\s*:\s*(.*)$", line)
            if m is None:
                raise ScenarioError("expected 'itinerary <agent>: <node> -> ... -> <node>'",
                                    lineno, col)
            if not _AGENT_RE.match(m.group(1)):
                raise ScenarioError(f"bad agent name '{m.group(1)}'", lineno, col)
            path = tuple(p.strip() for p in m.group(2).split("->"))
            if any(not p for p in path):
                raise ScenarioError("empty node name in itinerary", lineno, col)
            itineraries.append(Itinerary(m.group(1), path))
            where[("itinerary", len(itineraries) - 1)] = (lineno, col)
        elif head == "option":
            if len(words) != 3 or words[1] != "avoidance" or words[2] not in ("on", "off"):
                raise ScenarioError("expected 'option avoidance on|off'", lineno, col)
            options = GenOptions(avoidance=words[2] == "on")
        else:
            raise ScenarioError(f"unknown directive '{head}'", lineno, col)

    graph = ResourceGraph(tuple(nodes), tuple(edges), tuple(parking))
    check_scenario(graph, itineraries, where)
    return graph, itineraries, options


def _check_name(name, line, col):
    if not re.fullmatch(_NAME, name):
        raise ScenarioError(f"bad node name '{name}'", line, col)


def check_scenario(graph: ResourceGraph, itineraries, where=None):
    where = where or {}
    kinds = dict(graph.nodes)

    def loc(key):
        return where.get(key, (None, None))

    for k, (a, b) in enumerate(graph.edges):
        for n in (a, b):
            if n not in kinds:
                raise ScenarioError(f"unknown node '{n}'", *loc(("edge", k)))
        if a == b:
            raise ScenarioError(f"self-loop on '{a}'", *loc(("edge", k)))
    seen_markers = set()
    for k, (m, lot) in enumerate(graph.parking):
        for n in (m, lot):
            if n not in kinds:
                raise ScenarioError(f"unknown node '{n}'", *loc(("parking", k)))
        if kinds[m] != MARKER or kinds[lot] != LOT:
            raise ScenarioError(f"parking maps a marker to a lot, got '{m}' -> '{lot}'",
                                *loc(("parking", k)))
        if not graph.adjacent(m, lot):
            raise ScenarioError(f"parking lot '{lot}' is not adjacent to '{m}'",
                                *loc(("parking", k)))
        if m in seen_markers:
            raise ScenarioError(f"marker '{m}' has two parking lots", *loc(("parking", k)))
        seen_markers.add(m)

    agents, starts = set(), {}
    for k, it in enumerate(itineraries):
        here = loc(("itinerary", k))
        if it.agent in agents:
            raise ScenarioError(f"agent '{it.agent}' has two itineraries", *here)
        agents.add(it.agent)
        if len(it.path) < 2:
            raise ScenarioError("an itinerary needs at least two nodes", *here)
        for n in it.path:
            if n not in kinds:
                raise ScenarioError(f"unknown node '{n}'", *here)
        if kinds[it.path[0]] != LOT or kinds[it.path[-1]] != LOT:
            raise ScenarioError("an itinerary must start and end at a lot", *here)
        if len(set(it.path)) != len(it.path):
            raise ScenarioError(f"itinerary of '{it.agent}' visits a node twice", *here)
        for a, b in zip(it.path, it.path[1:]):
            if not graph.adjacent(a, b):
                raise ScenarioError(f"itinerary step '{a} -> {b}' does not follow an edge",
                                    *here)
        if it.path[0] in starts:
            raise ScenarioError(f"agents '{starts[it.path[0]]}' and '{it.agent}' both start "
                                f"at '{it.path[0]}'", *here)
        starts[it.path[0]] = it.agent
    _agent_decls(itineraries)


def _agent_decls(itineraries):
    """Group ``AMP[1]``, ``AMP[2]``, ... into arrays; keeps first-appearance order."""
    arrays, order = {}, []
    for it in itineraries:
        base, idx = _AGENT_RE.match(it.agent).groups()
        if base not in arrays:
            arrays[base] = []
            order.append(base)
        arrays[base].append(None if idx is None else int(idx))
    decls = []
    for base in order:
        idxs = arrays[base]
        if idxs == [None]:
            decls.append(Decl(base))
        elif None in idxs or sorted(idxs) != list(range(1, len(idxs) + 1)):
            raise ScenarioError(f"agents named '{base}' must be either one plain name or "
                                f"'{base}[1]'..'{base}[n]'")
        else:
            decls.append(Decl(base, Num(len(idxs))))
    return decls


def format_graph(graph: ResourceGraph, itineraries, options: GenOptions) -> str:
    lines = [f"node {n} {k}" for n, k in graph.nodes]
    lines += [f"edge {a} {b}" for a, b in graph.edges]
    lines += [f"parking {m} {p}" for m, p in graph.parking]
    lines += [f"itinerary {it.agent}: {' -> '.join(it.path)}" for it in itineraries]
    lines.append(f"option avoidance {'on' if options.avoidance else 'off'}")
    return "\n".join(lines) + "\n"


# --- generation ------------------------------------------------------------

def _agent_ref(name: str) -> Ref:
    base, idx = _AGENT_RE.match(name).groups()
    return Ref(base) if idx is None else Ref(base, (Num(int(idx)),))


class _NodeRules:
    def __init__(self, name):
        self.name = name
        self.services: list[str] = []
        self.states: list[str] = ["free"]
        self.rules: list[ActionRule] = []

    def add(self, agent, service, state, out, out_state):
        """``out`` is ``(target node, service)`` or ``None`` for termination."""
        for lst, item in ((self.services, service), (self.states, state),
                          (self.states, out_state)):
            if item not in lst:
                lst.append(item)
        a = _agent_ref(agent)
        in_msg = MessagePattern(a, Ref(self.name), Ref(service))
        out_msg = None if out is None else MessagePattern(a, Ref(out[0]), Ref(out[1]))
        rule = ActionRule((), in_msg, StatePattern(Ref(self.name), Ref(state)), out_msg,
                          StatePattern(Ref(self.name), Ref(out_state)))
        if rule not in self.rules:
            self.rules.append(rule)


def _held(prefix, nxt):
    return prefix if nxt is None else f"{prefix}_{nxt}"


def generate(graph: ResourceGraph, itineraries, options: GenOptions = GenOptions()) -> SystemDecl:
    check_scenario(graph, itineraries)
    node_names = [n for n, _ in graph.nodes]
    kinds = dict(graph.nodes)
    parking = dict(graph.parking)
    nodes = {n: _NodeRules(n) for n in node_names}
    init_state = {n: "free" for n in node_names}
    for it in itineraries:
        a, path = it.agent, it.path
        init_state[path[0]] = _held("occ", path[1])
        for k in range(len(path) - 1):
            u, v = path[k], path[k + 1]
            w = path[k + 2] if k + 2 < len(path) else None
            if k == 0:
                nodes[u].add(a, "start", _held("occ", v), (v, f"try_{u}"), _held("occ", v))
            nodes[v].add(a, f"try_{u}", "free", (u, f"ok_{v}"), _held("res", w))
            nodes[u].add(a, f"ok_{v}", _held("occ", v), (v, f"take_{u}"), "free")
            if w is None:
                nodes[v].add(a, f"take_{u}", "res", None, "occ")
            else:
                nodes[v].add(a, f"take_{u}", _held("res", w), (w, f"try_{v}"), _held("occ", w))

    if options.avoidance:
        if not graph.parking and _opposing_markers(graph, itineraries):
            warnings.warn("avoidance is on but no marker has a parking lot; opposite "
                          "itineraries share markers", ScenarioWarning, stacklevel=2)
        basic_states = {n: list(nodes[n].states) for n in node_names}
        for it in itineraries:
            a, path = it.agent, it.path
            for k in range(1, len(path) - 1):
                m, v = path[k], path[k + 1]
                if m not in parking or parking[m] == v:
                    continue
                heads_on = [s for s in (f"occ_{m}", f"res_{m}") if s in basic_states[v]]
                if not heads_on:
                    continue
                p = parking[m]
                for held in heads_on:
                    nodes[v].add(a, f"try_{m}", held, (m, f"not_{v}"), held)
                here = f"occ_{v}"
                nodes[m].add(a, f"not_{v}", here, (p, f"ptry_{m}"), here)
                nodes[p].add(a, f"ptry_{m}", "free", (m, f"pok_{p}"), f"pres_{m}")
                nodes[m].add(a, f"pok_{p}", here, (p, f"ptake_{m}"), "free")
                nodes[p].add(a, f"ptake_{m}", f"pres_{m}", (m, f"rtry_{p}"), f"pocc_{m}")
                nodes[m].add(a, f"rtry_{p}", "free", (p, f"rok_{m}"), f"res_{v}")
                nodes[p].add(a, f"rok_{m}", f"pocc_{m}", (m, f"rtake_{p}"), "free")
                nodes[m].add(a, f"rtake_{p}", f"res_{v}", (v, f"try_{m}"), here)

    agent_decls = _agent_decls(itineraries)
    for n in node_names:
        if init_state[n] not in nodes[n].states:
            nodes[n].states.append(init_state[n])

    types = []
    for n in node_names:
        nr = nodes[n]
        formals = tuple(Decl(nb) for nb in graph.neighbors(n))
        types.append(ServerType(
            name=n, formal_agents=tuple(agent_decls), formal_servers=formals,
            services=tuple(Decl(s) for s in nr.services),
            states=tuple(Decl(s) for s in nr.states), rules=tuple(nr.rules)))

    agent_actuals = tuple(Ref(d.name) if d.size is None else
                          Ref(d.name, (Range(Num(1), d.size),)) for d in agent_decls)
    init = []
    for n in node_names:
        actuals = agent_actuals + tuple(Ref(nb) for nb in graph.neighbors(n))
        init.append(ServerInit((), Ref(n), actuals, Ref(init_state[n])))
    for it in itineraries:
        init.append(MessageInit((), MessagePattern(_agent_ref(it.agent), Ref(it.path[0]),
                                                   Ref("start"))))
    decl = SystemDecl((), tuple(types), tuple(Decl(n) for n in node_names),
                      tuple(agent_decls), tuple(init))
    errors = [d for d in validate(decl) if d.severity == "error"]
    if errors:
        raise ScenarioError("generated model is inconsistent: " + "; ".join(map(str, errors)))
    return decl


def _opposing_markers(graph, itineraries) -> bool:
    kinds = dict(graph.nodes)
    hops = [set(zip(it.path, it.path[1:])) for it in itineraries]
    for i, a in enumerate(hops):
        for b in hops[i + 1:]:
            for u, v in a:
                if (v, u) in b and MARKER in (kinds[u], kinds[v]):
                    return True
    return False
