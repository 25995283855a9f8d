"""IMDS model declarations and their elaboration into ground systems.

A :class:`SystemDecl` mirrors the source text: server types with replicated
rules, instance declarations and an ``init`` block.  :func:`elaborate` turns it
into an :class:`ElaboratedSystem` in which every identifier, replicator and
index expression has been resolved to integers, ready for exploration.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union


@dataclass(frozen=True)
class SourceSpan:
    offset: int
    line: int
    column: int
    length: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


_SPAN = field(default=None, compare=False, repr=False)


# --- expressions -----------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: int
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class Name:
    id: str
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class BinOp:
    op: str  # "+" or "-"
    left: "Expr"
    right: "Expr"
    span: Optional[SourceSpan] = _SPAN


Expr = Union[Num, Name, BinOp]


@dataclass(frozen=True)
class Range:
    """``lo..hi`` inside an actual-parameter index list (``AMP[1..N]``)."""
    lo: Expr
    hi: Expr
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class Ref:
    name: str
    indices: tuple = ()
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class MessagePattern:
    agent: Ref
    server: Ref
    service: Ref
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class StatePattern:
    server: Ref
    state: Ref
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class Replicator:
    var: str
    lo: Expr
    hi: Expr
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class ActionRule:
    replicators: tuple
    in_message: MessagePattern
    in_state: StatePattern
    out_message: Optional[MessagePattern]
    out_state: StatePattern
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class Decl:
    """A named, optionally array-sized declaration (service, state, formal, instance)."""
    name: str
    size: Optional[Expr] = None
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class ConstBinding:
    name: str
    value: int
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class ServerType:
    name: str
    formal_agents: tuple
    formal_servers: tuple
    services: tuple
    states: tuple
    rules: tuple
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class ServerInit:
    replicators: tuple
    instance: Ref
    actuals: tuple
    state: Ref
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class MessageInit:
    replicators: tuple
    message: MessagePattern
    span: Optional[SourceSpan] = _SPAN


@dataclass(frozen=True)
class SystemDecl:
    constants: tuple
    server_types: tuple
    servers: tuple
    agents: tuple
    init: tuple


# --- diagnostics -----------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    span: Optional[SourceSpan] = None

    def __str__(self) -> str:
        where = f"{self.span}: " if self.span else ""
        return f"{where}{self.severity}: {self.message}"


class ElaborationError(Exception):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


# --- ground system ---------------------------------------------------------

@dataclass(frozen=True)
class ServerInstance:
    name: str
    type_name: str
    agents: tuple  # agent ids bound to the formal agent list, in order
    bindings: tuple  # (formal name, tuple of server ids)
    states: tuple  # ground state names
    services: tuple  # ground service names


class RuleId(NamedTuple):
    server: str
    ordinal: int
    valuation: tuple  # ((var, value), ...)

    def __str__(self) -> str:
        vals = "".join(f"<{k}={v}>" for k, v in self.valuation)
        return f"{self.server}#{self.ordinal}{vals}"


class GroundAction(NamedTuple):
    rule_id: RuleId
    server: int
    agent: int
    service: int
    state: int
    out_server: Optional[int]  # None: the agent terminates
    out_service: Optional[int]
    out_state: int

    @property
    def terminates(self) -> bool:
        return self.out_server is None


class Configuration(NamedTuple):
    """Global snapshot: one state per server, one slot per agent.

    A slot is ``(server, service)`` for a pending message or ``None`` once
    the agent has terminated.
    """
    states: tuple
    slots: tuple


@dataclass(frozen=True)
class ElaboratedSystem:
    servers: tuple
    agents: tuple  # flat agent names
    actions: tuple  # per server: tuple of GroundAction
    initial: Configuration
    warnings: tuple = ()
    _by_id: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        by_id = {a.rule_id: a for acts in self.actions for a in acts}
        object.__setattr__(self, "_by_id", by_id)

    def action(self, rule_id: RuleId) -> GroundAction:
        return self._by_id[rule_id]

    def server_index(self, name: str) -> int:
        return [s.name for s in self.servers].index(name)

    def agent_index(self, name: str) -> int:
        return self.agents.index(name)

    def all_actions(self):
        return [a for acts in self.actions for a in acts]

    def message_text(self, agent: int, msg) -> str:
        server, service = msg
        srv = self.servers[server]
        return f"{self.agents[agent]}.{srv.name}.{srv.services[service]}"

    def describe(self, action: GroundAction) -> str:
        srv = self.servers[action.server]
        lhs = (f"{{{self.agents[action.agent]}.{srv.name}.{srv.services[action.service]}, "
               f"{srv.name}.{srv.states[action.state]}}}")
        if action.terminates:
            rhs = f"{{{srv.name}.{srv.states[action.out_state]}}}"
        else:
            msg = self.message_text(action.agent, (action.out_server, action.out_service))
            rhs = f"{{{msg}, {srv.name}.{srv.states[action.out_state]}}}"
        return f"{lhs} -> {rhs}"

    def describe_config(self, cfg: Configuration) -> str:
        states = ", ".join(f"{s.name}={s.states[st]}" for s, st in zip(self.servers, cfg.states))
        slots = ", ".join(
            f"{a}:{'terminated' if m is None else self.message_text(i, m)}"
            for i, (a, m) in enumerate(zip(self.agents, cfg.slots)))
        return f"[{states}] [{slots}]"


def flat_name(name: str, index: Optional[int]) -> str:
    return name if index is None else f"{name}[{index}]"


# --- elaboration -----------------------------------------------------------

class _Failed(Exception):
    """Abort the current item; a diagnostic has already been recorded."""


class _TypeInfo:
    def __init__(self, st: ServerType, services: dict, states: dict,
                 service_names: list, state_names: list):
        self.decl = st
        self.services = services  # (name, index|None) -> local id
        self.states = states
        self.service_names = service_names
        self.state_names = state_names
        self.service_sizes = {}
        self.state_sizes = {}


class _Elaborator:
    def __init__(self, decl: SystemDecl, strict: bool):
        self.decl = decl
        self.strict = strict
        self.diags: list[Diagnostic] = []
        self._seen = set()

    def report(self, severity, message, span):
        key = (severity, message, span)
        if key not in self._seen:
            self._seen.add(key)
            self.diags.append(Diagnostic(severity, message, span))

    def fail(self, message, span):
        self.report("error", message, span)
        raise _Failed

    @property
    def has_errors(self):
        return any(d.severity == "error" for d in self.diags)

    # expressions

    def eval(self, expr, env) -> int:
        if isinstance(expr, Num):
            return expr.value
        if isinstance(expr, Name):
            if expr.id in env:
                return env[expr.id]
            if expr.id in self.consts:
                return self.consts[expr.id]
            self.fail(f"unbound identifier '{expr.id}'", expr.span)
        if isinstance(expr, BinOp):
            left = self.eval(expr.left, env)
            right = self.eval(expr.right, env)
            return left + right if expr.op == "+" else left - right
        self.fail(f"range '{_expr_text(expr)}' is only allowed in actual parameters",
                  getattr(expr, "span", None))

    def size(self, d: Decl) -> Optional[int]:
        if d.size is None:
            return None
        n = self.eval(d.size, {})
        if n < 1:
            self.fail(f"array size of '{d.name}' must be at least 1 (got {n})", d.span)
        return n

    def valuations(self, replicators):
        ranges = []
        names = set()
        for r in replicators:
            if r.var in names:
                self.fail(f"replicator index '{r.var}' bound twice", r.span)
            names.add(r.var)
            lo, hi = self.eval(r.lo, {}), self.eval(r.hi, {})
            ranges.append([(r.var, v) for v in range(lo, hi + 1)])
        for combo in itertools.product(*ranges):
            yield tuple(combo)

    def index_of(self, ref: Ref, env, size: Optional[int], what: str) -> Optional[int]:
        if size is None:
            if ref.indices:
                self.fail(f"{what} '{ref.name}' is not an array", ref.span)
            return None
        if len(ref.indices) != 1:
            self.fail(f"{what} '{ref.name}' needs exactly one index", ref.span)
        k = self.eval(ref.indices[0], env)
        if not 1 <= k <= size:
            self.fail(f"index {k} out of range 1..{size} for {what} '{ref.name}'", ref.span)
        return k

    # declarations

    def run(self) -> Optional[ElaboratedSystem]:
        self.consts = {}
        for c in self.decl.constants:
            if c.name in self.consts:
                self.report("error", f"constant '{c.name}' defined twice", c.span)
            if c.value < 0:
                self.report("error", f"constant '{c.name}' must be non-negative", c.span)
            self.consts[c.name] = c.value

        self.types = {}
        for st in self.decl.server_types:
            if st.name in self.types:
                self.report("error", f"server type '{st.name}' declared twice", st.span)
                continue
            try:
                self.types[st.name] = self.type_info(st)
            except _Failed:
                pass

        self.server_names, self.server_arrays = self.instances(self.decl.servers, "server")
        self.agent_names, self.agent_arrays = self.instances(self.decl.agents, "agent")
        for name in set(self.server_arrays) & set(self.agent_arrays):
            self.report("error", f"'{name}' declared both as server and agent", None)
        for d in self.decl.servers:
            if d.name not in self.types:
                self.report("error", f"server '{d.name}' has no server type", d.span)
        self.server_ids = {n: i for i, n in enumerate(self.server_names)}
        self.agent_ids = {n: i for i, n in enumerate(self.agent_names)}

        self.bound = {}  # server id -> (agents, bindings dict, init state)
        self.pending = {}  # agent id -> (server id, service id, span)
        for item in self.decl.init:
            for valuation in self._item_valuations(item):
                try:
                    if isinstance(item, ServerInit):
                        self.bind_server(item, dict(valuation))
                    else:
                        self.init_message(item, dict(valuation))
                except _Failed:
                    pass
        for name, sid in self.server_ids.items():
            if sid not in self.bound and name.split("[")[0] in self.types:
                self.report("error", f"server instance '{name}' is not bound in init", None)
        for name, aid in self.agent_ids.items():
            if aid not in self.pending:
                self.report("error", f"agent '{name}' has no initial message", None)
            else:
                sid, _, span = self.pending[aid]
                if sid in self.bound and aid not in self.bound[sid][0]:
                    self.report("error", f"agent '{name}' is not among the formal agents of "
                                f"'{self.server_names[sid]}'", span)

        if self.has_errors:
            return None

        actions = []
        for sid, name in enumerate(self.server_names):
            actions.append(self.ground_rules(sid))
        if self.has_errors:
            return None

        servers = []
        for sid, name in enumerate(self.server_names):
            info = self.types[self.instance_type(name)]
            agents, bindings, _ = self.bound[sid]
            servers.append(ServerInstance(
                name=name, type_name=info.decl.name, agents=tuple(agents),
                bindings=tuple((k, tuple(v)) for k, v in bindings.items()),
                states=tuple(info.state_names), services=tuple(info.service_names)))
        initial = Configuration(
            states=tuple(self.bound[sid][2] for sid in range(len(self.server_names))),
            slots=tuple(self.pending[aid][:2] for aid in range(len(self.agent_names))))
        return ElaboratedSystem(
            servers=tuple(servers), agents=tuple(self.agent_names),
            actions=tuple(actions), initial=initial,
            warnings=tuple(d for d in self.diags if d.severity == "warning"))

    def _item_valuations(self, item):
        try:
            return list(self.valuations(item.replicators))
        except _Failed:
            return []

    def type_info(self, st: ServerType) -> _TypeInfo:
        def ground(decls, what):
            table, names, sizes = {}, [], {}
            for d in decls:
                if d.name in sizes:
                    self.fail(f"{what} '{d.name}' declared twice in server type '{st.name}'", d.span)
                n = self.size(d)
                sizes[d.name] = n
                if n is None:
                    table[(d.name, None)] = len(names)
                    names.append(d.name)
                else:
                    for k in range(1, n + 1):
                        table[(d.name, k)] = len(names)
                        names.append(flat_name(d.name, k))
            return table, names, sizes

        services, service_names, service_sizes = ground(st.services, "service")
        states, state_names, state_sizes = ground(st.states, "state")
        if not state_names:
            self.fail(f"server type '{st.name}' declares no states", st.span)
        formals = set()
        for d in st.formal_agents + st.formal_servers:
            if d.name in formals:
                self.fail(f"formal parameter '{d.name}' declared twice in '{st.name}'", d.span)
            formals.add(d.name)
            self.size(d)
        info = _TypeInfo(st, services, states, service_names, state_names)
        info.service_sizes = service_sizes
        info.state_sizes = state_sizes
        return info

    def instances(self, decls, what):
        names, arrays = [], {}
        for d in decls:
            if d.name in arrays:
                self.report("error", f"{what} '{d.name}' declared twice", d.span)
                continue
            try:
                n = self.size(d)
            except _Failed:
                continue
            arrays[d.name] = n
            if n is None:
                names.append(d.name)
            else:
                names.extend(flat_name(d.name, k) for k in range(1, n + 1))
        return names, arrays

    def instance_type(self, flat: str) -> str:
        return flat.split("[", 1)[0]

    def resolve_entity(self, ref: Ref, env, arrays, what) -> str:
        if ref.name not in arrays:
            self.fail(f"undeclared {what} '{ref.name}'", ref.span)
        k = self.index_of(ref, env, arrays[ref.name], what)
        return flat_name(ref.name, k)

    def lookup(self, table, sizes, ref: Ref, env, what, owner) -> int:
        if ref.name not in sizes:
            self.fail(f"undeclared {what} '{ref.name}' in server type '{owner}'", ref.span)
        k = self.index_of(ref, env, sizes[ref.name], what)
        return table[(ref.name, k)]

    def lookup_service(self, info: _TypeInfo, ref: Ref, env) -> int:
        return self.lookup(info.services, info.service_sizes, ref, env, "service", info.decl.name)

    def lookup_state(self, info: _TypeInfo, ref: Ref, env) -> int:
        return self.lookup(info.states, info.state_sizes, ref, env, "state", info.decl.name)

    # init block

    def expand_actual(self, ref: Ref, env) -> list:
        if ref.name in self.agent_arrays:
            arrays = self.agent_arrays
        elif ref.name in self.server_arrays:
            arrays = self.server_arrays
        else:
            self.fail(f"undeclared actual parameter '{ref.name}'", ref.span)
        size = arrays[ref.name]
        if size is None:
            if ref.indices:
                self.fail(f"'{ref.name}' is not an array", ref.span)
            return [ref.name]
        if not ref.indices:
            return [flat_name(ref.name, k) for k in range(1, size + 1)]
        out = []
        for ix in ref.indices:
            if isinstance(ix, Range):
                ks = range(self.eval(ix.lo, env), self.eval(ix.hi, env) + 1)
            else:
                ks = [self.eval(ix, env)]
            for k in ks:
                if not 1 <= k <= size:
                    self.fail(f"index {k} out of range 1..{size} for '{ref.name}'", ref.span)
                out.append(flat_name(ref.name, k))
        return out

    def bind_server(self, item: ServerInit, env):
        name = self.resolve_entity(item.instance, env, self.server_arrays, "server")
        sid = self.server_ids[name]
        if sid in self.bound:
            self.fail(f"server instance '{name}' bound twice in init", item.span)
        type_name = self.instance_type(name)
        if type_name not in self.types:
            raise _Failed
        info = self.types[type_name]
        actuals = []
        for ref in item.actuals:
            actuals.extend(self.expand_actual(ref, env))
        pos = 0
        agents, bindings = [], {}

        def take(formal: Decl, kind_ids, kind):
            nonlocal pos
            n = self.eval(formal.size, {}) if formal.size is not None else 1
            chunk = actuals[pos:pos + n]
            if len(chunk) < n:
                self.fail(f"arity mismatch binding '{name}': too few actual parameters "
                          f"for formal {kind} '{formal.name}'", item.span)
            for a in chunk:
                if a not in kind_ids:
                    self.fail(f"actual parameter '{a}' of '{name}' is not a {kind}", item.span)
            pos += n
            return [kind_ids[a] for a in chunk]

        for formal in info.decl.formal_agents:
            ids = take(formal, self.agent_ids, "agent")
            bindings[formal.name] = ids
            agents.extend(ids)
        for formal in info.decl.formal_servers:
            bindings[formal.name] = take(formal, self.server_ids, "server")
        if pos != len(actuals):
            self.fail(f"arity mismatch binding '{name}': {len(actuals)} actual parameters, "
                      f"{pos} expected", item.span)
        if len(set(agents)) != len(agents):
            self.fail(f"agent bound twice in the formal agents of '{name}'", item.span)
        state = self.lookup_state(info, item.state, env)
        self.bound[sid] = (agents, bindings, state)

    def init_message(self, item: MessageInit, env):
        msg = item.message
        agent = self.resolve_entity(msg.agent, env, self.agent_arrays, "agent")
        server = self.resolve_entity(msg.server, env, self.server_arrays, "server")
        aid, sid = self.agent_ids[agent], self.server_ids[server]
        type_name = self.instance_type(server)
        if type_name not in self.types:
            raise _Failed
        service = self.lookup_service(self.types[type_name], msg.service, env)
        if aid in self.pending:
            self.fail(f"agent '{agent}' has more than one initial message", item.span)
        self.pending[aid] = (sid, service, item.span)

    # rules

    def ground_rules(self, sid: int) -> tuple:
        name = self.server_names[sid]
        info = self.types[self.instance_type(name)]
        agents, bindings, _ = self.bound[sid]
        agent_formals = {d.name: d for d in info.decl.formal_agents}
        server_formals = {d.name: d for d in info.decl.formal_servers}
        out, seen = [], {}

        def formal_member(ref, formals, env, what):
            d = formals[ref.name]
            size = self.eval(d.size, {}) if d.size is not None else None
            k = self.index_of(ref, env, size, what)
            return bindings[ref.name][0 if k is None else k - 1]

        def self_ref(ref: Ref, what):
            if ref.name == info.decl.name and not ref.indices:
                return
            msg = (f"{what} names '{ref.name}' instead of the owning server type "
                   f"'{info.decl.name}'")
            if self.strict:
                self.fail(msg, ref.span)
            self.report("warning", msg + "; treated as the owning server", ref.span)

        for ordinal, rule in enumerate(info.decl.rules, start=1):
            try:
                vals = list(self.valuations(rule.replicators))
            except _Failed:
                continue
            for valuation in vals:
                env = dict(valuation)
                try:
                    im = rule.in_message
                    if im.agent.name not in agent_formals:
                        self.fail(f"agent '{im.agent.name}' is not a formal agent of "
                                  f"server type '{info.decl.name}'", im.agent.span)
                    agent = formal_member(im.agent, agent_formals, env, "agent")
                    self_ref(im.server, "input message")
                    service = self.lookup_service(info, im.service, env)
                    self_ref(rule.in_state.server, "input state")
                    state = self.lookup_state(info, rule.in_state.state, env)
                    self_ref(rule.out_state.server, "output state")
                    out_state = self.lookup_state(info, rule.out_state.state, env)
                    out_server = out_service = None
                    om = rule.out_message
                    if om is not None:
                        if om.agent.name not in agent_formals:
                            self.fail(f"agent '{om.agent.name}' is not a formal agent of "
                                      f"server type '{info.decl.name}'", om.agent.span)
                        if formal_member(om.agent, agent_formals, env, "agent") != agent:
                            self.fail("output message must carry the same agent as the "
                                      "input message", om.agent.span)
                        if om.server.name == info.decl.name and om.server.name not in server_formals:
                            if om.server.indices:
                                self.fail(f"server '{om.server.name}' is not an array", om.server.span)
                            out_server = sid
                        elif om.server.name in server_formals:
                            out_server = formal_member(om.server, server_formals, env, "server")
                        else:
                            self.fail(f"undeclared server '{om.server.name}' in server type "
                                      f"'{info.decl.name}'", om.server.span)
                        target_type = self.types[self.instance_type(self.server_names[out_server])]
                        out_service = self.lookup_service(target_type, om.service, env)
                except _Failed:
                    continue
                action = GroundAction(
                    rule_id=RuleId(name, ordinal, valuation), server=sid, agent=agent,
                    service=service, state=state, out_server=out_server,
                    out_service=out_service, out_state=out_state)
                key = action[1:]
                if key in seen:
                    self.report("warning", f"duplicate ground action {action.rule_id} "
                                f"(same as {seen[key]}) collapsed", rule.span)
                    continue
                seen[key] = action.rule_id
                out.append(action)
        return tuple(out)


def _expr_text(expr) -> str:
    if isinstance(expr, Num):
        return str(expr.value)
    if isinstance(expr, Name):
        return expr.id
    if isinstance(expr, BinOp):
        return f"{_expr_text(expr.left)}{expr.op}{_expr_text(expr.right)}"
    if isinstance(expr, Range):
        return f"{_expr_text(expr.lo)}..{_expr_text(expr.hi)}"
    return repr(expr)


def validate(decl: SystemDecl, strict: bool = True) -> list[Diagnostic]:
    """Check every structural invariant of ``decl``.

    Returns all diagnostics; the list is empty iff the model is well formed.
    With ``strict=False`` a rule whose input pattern misnames its own server
    only produces a warning (needed to read the historical listing as written).
    """
    el = _Elaborator(decl, strict)
    el.run()
    return el.diags


def elaborate(decl: SystemDecl, strict: bool = True) -> ElaboratedSystem:
    el = _Elaborator(decl, strict)
    sys = el.run()
    if sys is None:
        raise ElaborationError([d for d in el.diags if d.severity == "error"])
    return sys


def initial_configuration(sys: ElaboratedSystem) -> Configuration:
    return sys.initial


def isomorphic(a: ElaboratedSystem, b: ElaboratedSystem, names: bool = True) -> bool:
    """Structural equality of two ground systems, ignoring rule identifiers.

    With ``names=False`` servers, agents, states and services are compared by
    position only.
    """
    if len(a.servers) != len(b.servers) or len(a.agents) != len(b.agents):
        return False
    if a.initial != b.initial:
        return False
    if names and a.agents != b.agents:
        return False
    for sa, sb, acts_a, acts_b in zip(a.servers, b.servers, a.actions, b.actions):
        if len(sa.states) != len(sb.states) or len(sa.services) != len(sb.services):
            return False
        if names and (sa.name, sa.states, sa.services) != (sb.name, sb.states, sb.services):
            return False
        if {x[1:] for x in acts_a} != {x[1:] for x in acts_b}:
            return False
    return True
