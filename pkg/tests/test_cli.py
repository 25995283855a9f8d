import io
import json
import subprocess
import sys as _sys
from collections import deque

import jsonschema
import pytest

import oracle
from conftest import fixture_path, load
from imds_verify.cli import main, parse_args
from imds_verify.report import load_schema
from imds_verify.statespace import enabled_actions, step

TWO_AMP = str(fixture_path("two_amp.imds"))
VERBATIM = str(fixture_path("two_amp_verbatim.imds"))
MINIMAL = str(fixture_path("minimal.imds"))
SINGLE = str(fixture_path("single_amp.amg"))
NOAVOID = str(fixture_path("road_noavoid.amg"))


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_two_amp_exits_one(capsys):
    code, out, _ = run(capsys, "verify", TWO_AMP)
    assert code == 1
    assert "deadlock 1: communication, total over agents, partial over servers" in out
    assert "dead servers: markerE[2], lotE[2]" in out


def test_verify_json_is_clean_and_valid(capsys):
    code, out, err = run(capsys, "verify", VERBATIM, "--verbatim", "--format", "json")
    assert code == 1
    doc = json.loads(out)
    jsonschema.validate(doc, load_schema())
    assert "warning" in err and doc["warnings"]
    assert len(doc["deadlocks"][0]["dead_servers"]) == 2
    assert {a["display"] for a in doc["deadlocks"][0]["dead_agents"]} == {"AMP", "AMP__1"}


def test_verify_single_amp_exits_zero(capsys):
    code, out, _ = run(capsys, "verify", SINGLE, "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["termination_configs"] >= 1 and doc["deadlocks"] == []


def test_verify_limit_exits_three(capsys, monkeypatch):
    code, out, err = run(capsys, "verify", TWO_AMP, "--max-states", "5", "--format", "json")
    assert code == 3 and json.loads(out)["complete"] is False and "limit" in err
    monkeypatch.setenv("IMDS_MAX_STATES", "5")
    assert run(capsys, "verify", TWO_AMP)[0] == 3
    assert run(capsys, "verify", TWO_AMP, "--max-states", "1000")[0] == 1


def test_verify_dot_and_output_file(capsys, tmp_path):
    target = tmp_path / "r.dot"
    code, out, _ = run(capsys, "verify", TWO_AMP, "--format", "dot", "--output", str(target))
    assert code == 1 and out == ""
    text = target.read_text()
    assert text.count("digraph deadlock_") == 4
    assert run(capsys, "verify", SINGLE, "--format", "dot")[1] == "digraph no_deadlock {\n}\n"


def test_verify_errors_exit_two(capsys, tmp_path):
    bad = tmp_path / "bad.imds"
    bad.write_text("server: s(")
    code, out, err = run(capsys, "verify", str(bad), "--format", "json")
    assert code == 2 and out == "" and "bad.imds:1:11" in err
    code, _, err = run(capsys, "verify", VERBATIM)
    assert code == 2 and "marker2" in err
    assert run(capsys, "verify", str(tmp_path / "missing.imds"))[0] == 2
    with pytest.raises(SystemExit) as info:
        main(["verify"])
    assert info.value.code == 2


def test_simulate_is_reproducible(capsys):
    first = run(capsys, "simulate", TWO_AMP, "--seed", "7", "--steps", "40")
    second = run(capsys, "simulate", TWO_AMP, "--seed", "7", "--steps", "40")
    assert first == second
    assert first[1].startswith("step 0: [markerE[1]=free[1]")


def test_simulate_minimal_terminates(capsys):
    code, out, _ = run(capsys, "simulate", MINIMAL)
    assert code == 0
    assert out.splitlines()[-1] == "terminated: every agent finished"
    assert out.count("  -> ") == 1


def _stuck_script(sys):
    """Action indices steering both AMPs into a configuration with no moves."""
    start = sys.initial
    parent = {start: None}
    queue = deque([start])
    while queue:
        cfg = queue.popleft()
        if not enabled_actions(cfg, sys) and any(s is not None for s in cfg.slots):
            break
        for a, _ in oracle.successors(sys, (cfg.states, cfg.slots)):
            nxt = step(cfg, a)
            if nxt not in parent:
                parent[nxt] = (cfg, a)
                queue.append(nxt)
    choices = []
    while parent[cfg] is not None:
        prev, a = parent[cfg]
        choices.append(enabled_actions(prev, sys).index(a))
        cfg = prev
    return choices[::-1]


def test_simulate_script_ends_stuck(capsys, tmp_path):
    script = tmp_path / "head_on.txt"
    choices = _stuck_script(load("road_noavoid.amg"))
    script.write_text("# drive both AMPs toward each other\n" + "\n".join(map(str, choices)))
    code, out, _ = run(capsys, "simulate", NOAVOID, "--script", str(script))
    assert code == 1
    assert out.splitlines()[-1] == "stuck: possible deadlock, run verify"


def test_simulate_script_out_of_range(capsys, tmp_path):
    script = tmp_path / "s.txt"
    script.write_text("5\n")
    assert run(capsys, "simulate", MINIMAL, "--script", str(script))[0] == 2


def test_simulate_interactive_reprompts(capsys, monkeypatch):
    monkeypatch.setattr(_sys, "stdin", io.StringIO("x\n9\n0\n"))
    code, out, _ = run(capsys, "simulate", MINIMAL, "--interactive")
    assert code == 0
    assert "invalid choice 'x'" in out and "invalid choice '9'" in out
    assert "terminated" in out


def test_generate(capsys, tmp_path):
    target = tmp_path / "road.imds"
    code, out, _ = run(capsys, "generate", str(fixture_path("road_avoid.amg")),
                       "--output", str(target))
    assert code == 0 and "6 servers, 2 agents" in out
    assert run(capsys, "verify", str(target))[0] == 1
    code, _, _ = run(capsys, "generate", str(fixture_path("road_avoid.amg")),
                     "--output", str(target), "--avoidance", "off")
    assert "not_" not in target.read_text()


def test_generate_bad_scenario(capsys, tmp_path):
    bad = tmp_path / "bad.amg"
    bad.write_text("node a lot\nnode m marker\nnode b lot\nedge a m\nedge m b\n"
                   "itinerary X: a -> b\n")
    code, _, err = run(capsys, "generate", str(bad), "--output", str(tmp_path / "o.imds"))
    assert code == 2 and "bad.amg:6:1:" in err and "does not follow an edge" in err


def test_corridor_generation(capsys, tmp_path):
    target = tmp_path / "c.imds"
    assert run(capsys, "generate", str(fixture_path("corridor.amg")), "--output", str(target))[0] == 0
    assert run(capsys, "stats", str(target))[1] == "configs=5 edges=4 terminal=1 complete=yes\n"


def test_export(capsys, tmp_path):
    target = tmp_path / "two_amp.pml"
    assert run(capsys, "export", TWO_AMP, "--output", str(target))[0] == 0
    assert target.read_text().count("\nproctype ") == 6
    assert json.loads((tmp_path / "two_amp.manifest.json").read_text())["agents"] == ["AMP[1]", "AMP[2]"]


def test_stats(capsys):
    assert run(capsys, "stats", MINIMAL) == (0, "configs=2 edges=1 terminal=1 complete=yes\n", "")
    code, out, _ = run(capsys, "stats", TWO_AMP, "--format", "json")
    assert code == 0 and json.loads(out) == {"configs": 228, "edges": 376, "terminal": 5,
                                             "complete": True}
    assert run(capsys, "stats", TWO_AMP, "--max-states", "10")[0] == 3


def test_run_config_defaults():
    cfg = parse_args(["simulate", MINIMAL])
    assert (cfg.seed, cfg.steps, cfg.interactive, cfg.format) == (0, 1000, False, "text")
    assert parse_args(["generate", SINGLE, "--output", "x", "--avoidance", "on"]).avoidance is True


def test_console_script(tmp_path):
    proc = subprocess.run([_sys.executable, "-m", "imds_verify.cli", "stats", MINIMAL],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("configs=2")
