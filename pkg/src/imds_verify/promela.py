"""Promela export of an elaborated IMDS system.

Encoding: every server owns a buffered channel with one slot per agent and a
global state variable.  Its process loops over atomic alternatives, one per
ground action: a state test plus a selective poll for the matching message,
then consume, update the state and forward the output message.  A server with
an empty channel parks at an ``end`` label, so a blocked process still holding
messages is exactly an invalid end state.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .model import ElaboratedSystem


@dataclass(frozen=True)
class PromelaModel:
    text: str
    manifest: dict

    def manifest_json(self) -> str:
        return json.dumps(self.manifest, indent=2, sort_keys=True) + "\n"


class _Names:
    def __init__(self):
        self.used = set()

    def make(self, *parts) -> str:
        base = "_".join(re.sub(r"[^A-Za-z0-9]+", "_", p).strip("_") for p in parts)
        name, k = base, 2
        while name in self.used:
            name, k = f"{base}_{k}", k + 1
        self.used.add(name)
        return name


def export(sys: ElaboratedSystem) -> PromelaModel:
    names = _Names()
    capacity = max(1, len(sys.agents))

    state_const, chan, var, proc = {}, {}, {}, {}
    for sid, srv in enumerate(sys.servers):
        chan[sid] = names.make("ch", srv.name)
        var[sid] = names.make("st", srv.name)
        proc[sid] = names.make("p", srv.name)
        for k, st in enumerate(srv.states):
            state_const[sid, k] = names.make("s", srv.name, st)
    msg_const = {}
    for aid, agent in enumerate(sys.agents):
        for sid, srv in enumerate(sys.servers):
            for k, svc in enumerate(srv.services):
                msg_const[aid, sid, k] = names.make("m", agent, srv.name, svc)

    out = ["/* IMDS system exported for Spin; deadlocks show up as invalid end states */", ""]
    for sid, srv in enumerate(sys.servers):
        for k in range(len(srv.states)):
            out.append(f"#define {state_const[sid, k]} {k}")
    for n, key in enumerate(sorted(msg_const), start=1):
        out.append(f"#define {msg_const[key]} {n}")
    out.append("")
    for sid in range(len(sys.servers)):
        out.append(f"chan {chan[sid]} = [{capacity}] of {{ int }};")
    for sid in range(len(sys.servers)):
        out.append(f"int {var[sid]} = {state_const[sid, sys.initial.states[sid]]};")
    out.append("")

    rules = {}
    for sid, srv in enumerate(sys.servers):
        ch, st = chan[sid], var[sid]
        out.append(f"proctype {proc[sid]}() {{")
        out.append("  do")
        for pos, a in enumerate(sys.actions[sid]):
            m = msg_const[a.agent, sid, a.service]
            body = [f"{ch}??{m}", f"{st} = {state_const[sid, a.out_state]}"]
            if not a.terminates:
                body.append(f"{chan[a.out_server]}!{msg_const[a.agent, a.out_server, a.out_service]}")
            guard = f"{st} == {state_const[sid, a.state]} && {ch}??[{m}]"
            out.append(f"  :: atomic {{ {guard} -> {'; '.join(body)} }}")
            rules[str(a.rule_id)] = {"proctype": proc[sid], "alternative": pos + 1}
        out.append(f"  :: empty({ch}) ->")
        out.append(f"end_wait: nempty({ch})")
        out.append("  od")
        out.append("}")
        out.append("")

    out.append("init {")
    out.append("  atomic {")
    for aid, slot in enumerate(sys.initial.slots):
        if slot is not None:
            out.append(f"    {chan[slot[0]]}!{msg_const[aid, slot[0], slot[1]]};")
    for sid in range(len(sys.servers)):
        out.append(f"    run {proc[sid]}();")
    out.append("  }")
    out.append("}")

    manifest = {
        "servers": {srv.name: {
            "proctype": proc[sid], "channel": chan[sid], "state_variable": var[sid],
            "states": {st: state_const[sid, k] for k, st in enumerate(srv.states)},
        } for sid, srv in enumerate(sys.servers)},
        "agents": list(sys.agents),
        "messages": {f"{sys.agents[a]}.{sys.servers[s].name}.{sys.servers[s].services[k]}": c
                     for (a, s, k), c in sorted(msg_const.items())},
        "rules": rules,
        "channel_capacity": capacity,
    }
    return PromelaModel("\n".join(out) + "\n", manifest)
