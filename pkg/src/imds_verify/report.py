"""Verification report document (JSON) and its text rendering."""
from __future__ import annotations

import json
from importlib.resources import files

from . import __version__
from .deadlock import detect_termination, find_deadlocks
from .model import ElaboratedSystem
from .statespace import Lts, stats
from .views import agent_view, rename_agents, render_sequence, server_view, to_dot

SCHEMA_VERSION = 1


def load_schema() -> dict:
    return json.loads(files("imds_verify").joinpath("report.schema.json").read_text())


def _step(e, sys: ElaboratedSystem, names: dict) -> dict:
    a = sys.action(e.label.rule_id)
    srv = sys.servers[a.server]
    out = None
    if not a.terminates:
        target = sys.servers[a.out_server]
        out = f"{names[a.agent]}.{target.name}.{target.services[a.out_service]}"
    return {
        "agent": names[a.agent],
        "server": srv.name,
        "rule": str(a.rule_id),
        "input": f"{names[a.agent]}.{srv.name}.{srv.services[a.service]}",
        "state": f"{srv.name}.{srv.states[a.state]}",
        "output": out,
        "new_state": f"{srv.name}.{srv.states[a.out_state]}",
    }


def build_report(sys: ElaboratedSystem, lts: Lts, source: str = "") -> dict:
    names = rename_agents(sys)
    st = stats(lts)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "source": source,
        "model": {
            "servers": [s.name for s in sys.servers],
            "agents": [{"name": flat, "display": names[a]} for a, flat in enumerate(sys.agents)],
            "ground_actions": sum(len(acts) for acts in sys.actions),
        },
        "lts": st.as_dict(),
        "complete": lts.complete,
        "termination_configs": 0,
        "deadlocks": [],
        "warnings": [str(w) for w in sys.warnings],
    }
    if not lts.complete:
        return doc
    doc["termination_configs"] = len(detect_termination(lts))
    for r in find_deadlocks(lts, sys):
        cfg = lts.configs[r.config]
        kinds = dict(r.agent_kinds)
        dead_agents = []
        for a in r.dead_agents:
            server, service = cfg.slots[a]
            srv = sys.servers[server]
            dead_agents.append({"name": sys.agents[a], "display": names[a], "kind": kinds[a],
                                "pending": f"{srv.name}.{srv.services[service]}"})
        doc["deadlocks"].append({
            "kind": r.kind,
            "scope": r.scope,
            "server_scope": r.server_scope,
            "dead_agents": dead_agents,
            "dead_servers": [sys.servers[s].name for s in r.dead_servers],
            "configuration": sys.describe_config(cfg),
            "witness": [_step(e, sys, names) for e in r.witness.steps],
            "server_view_dot": to_dot(server_view(r.witness, sys, r.dead_servers)),
            "agent_view": render_sequence(agent_view(r.witness, sys, r.dead_agents)),
        })
    return doc


def to_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_text(doc: dict) -> str:
    m, lts = doc["model"], doc["lts"]
    lines = [
        f"model: {len(m['servers'])} servers, {len(m['agents'])} agents, "
        f"{m['ground_actions']} ground actions",
        f"state space: {lts['configs']} configurations, {lts['edges']} transitions, "
        f"{lts['terminal']} terminal" + ("" if doc["complete"] else " (INCOMPLETE)"),
        f"termination configurations: {doc['termination_configs']}",
        f"deadlocks: {len(doc['deadlocks'])}",
    ]
    for k, d in enumerate(doc["deadlocks"], start=1):
        agents = ", ".join(f"{a['display']} ({a['kind']}, waits for {a['pending']})"
                           for a in d["dead_agents"]) or "none"
        lines += [
            "",
            f"deadlock {k}: {d['kind']}, {d['scope']} over agents, "
            f"{d['server_scope']} over servers",
            f"  dead servers: {', '.join(d['dead_servers']) or 'none'}",
            f"  dead agents: {agents}",
            f"  reached after {len(d['witness'])} steps",
            "  server view:",
        ]
        lines += ["    " + s for s in d["server_view_dot"].splitlines()]
        lines.append("  agent view:")
        lines += ["    " + s for s in d["agent_view"].splitlines()]
    return "\n".join(lines) + "\n"
