"""``imds-verify`` command line: verify, simulate, generate, export, stats."""
from __future__ import annotations

import argparse
import random
import sys as _sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import __version__
from .model import ElaborationError, elaborate
from .promela import export
from .report import build_report, render_text, to_json
from .scenario import GenOptions, ScenarioError, generate, parse_graph
from .statespace import ExplorationLimits, enabled_actions, explore, stats, step
from .syntax import ParseError, parse, pretty_print

EXIT_OK, EXIT_DEADLOCK, EXIT_ERROR, EXIT_LIMIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: Path
    output: Optional[Path] = None
    max_states: Optional[int] = None
    format: str = "text"
    jobs: int = 1
    verbatim: bool = False
    seed: int = 0
    steps: int = 1000
    interactive: bool = False
    script: Optional[Path] = None
    avoidance: Optional[bool] = None


def _err(msg: str):
    print(msg, file=_sys.stderr)


def _read(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror or exc}") from exc


def _generate_decl(path: Path, avoidance: Optional[bool]):
    graph, itineraries, options = parse_graph(_read(path))
    if avoidance is not None:
        options = GenOptions(avoidance=avoidance)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        decl = generate(graph, itineraries, options)
    for w in caught:
        _err(f"{path}: warning: {w.message}")
    return decl


def load_system(path: Path, verbatim: bool = False, avoidance: Optional[bool] = None):
    """Parse (or generate, for ``.amg``) and elaborate; diagnostics go to stderr."""
    if path.suffix == ".amg":
        decl = _generate_decl(path, avoidance)
    else:
        result = parse(_read(path))
        for w in result.warnings:
            _err(f"{path}:{w}")
        decl = result.decl
    system = elaborate(decl, strict=not verbatim)
    for w in system.warnings:
        _err(f"{path}:{w}")
    return system


def _limits(cfg: RunConfig) -> ExplorationLimits:
    return ExplorationLimits.from_env(cfg.max_states)


def _emit(cfg: RunConfig, text: str):
    if cfg.output is None:
        _sys.stdout.write(text)
    else:
        cfg.output.write_text(text)


def cmd_verify(cfg: RunConfig) -> int:
    system = load_system(cfg.input, cfg.verbatim)
    lts = explore(system, _limits(cfg), jobs=cfg.jobs)
    doc = build_report(system, lts, source=cfg.input.name)
    if cfg.format == "json":
        _emit(cfg, to_json(doc))
    elif cfg.format == "dot":
        graphs = [d["server_view_dot"].replace("digraph server_view", f"digraph deadlock_{k}", 1)
                  for k, d in enumerate(doc["deadlocks"], start=1)]
        _emit(cfg, "".join(graphs) or "digraph no_deadlock {\n}\n")
    else:
        _emit(cfg, render_text(doc))
    if not lts.complete:
        _err(f"state space exceeds the limit of {len(lts.configs)} configurations; "
             "results are incomplete (raise --max-states or IMDS_MAX_STATES)")
        return EXIT_LIMIT
    return EXIT_DEADLOCK if doc["deadlocks"] else EXIT_OK


def _script_choices(path: Path):
    for n, line in enumerate(_read(path).splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            try:
                yield int(line)
            except ValueError:
                raise UsageError(f"{path}:{n}: expected an action index, got {line!r}") from None


def cmd_simulate(cfg: RunConfig, stdin=None) -> int:
    system = load_system(cfg.input, cfg.verbatim)
    stdin = stdin or _sys.stdin
    rng = random.Random(cfg.seed)
    script = _script_choices(cfg.script) if cfg.script else None
    out = []

    def say(line):
        out.append(line)
        if cfg.interactive:
            print(line, flush=True)

    cfg_now = system.initial
    status, reason = EXIT_OK, f"step limit of {cfg.steps} reached"
    for k in range(cfg.steps + 1):
        say(f"step {k}: {system.describe_config(cfg_now)}")
        actions = enabled_actions(cfg_now, system)
        if not actions:
            if all(s is None for s in cfg_now.slots):
                reason = "terminated: every agent finished"
            else:
                status, reason = EXIT_DEADLOCK, "stuck: possible deadlock, run verify"
            break
        if k == cfg.steps:
            break
        for i, a in enumerate(actions):
            say(f"  [{i}] {system.describe(a)}")
        if script is not None:
            choice = next(script, None)
            if choice is None:
                reason = "script exhausted"
                break
            if not 0 <= choice < len(actions):
                raise UsageError(f"script chooses action {choice} but only "
                                 f"{len(actions)} are enabled at step {k}")
        elif cfg.interactive:
            choice = None
            while choice is None:
                print(f"choose 0..{len(actions) - 1} (q to quit): ", end="", flush=True)
                line = stdin.readline()
                if not line or line.strip() == "q":
                    reason = "stopped by user"
                    break
                try:
                    choice = int(line)
                    if not 0 <= choice < len(actions):
                        raise ValueError
                except ValueError:
                    print(f"invalid choice {line.strip()!r}", flush=True)
                    choice = None
            if choice is None:
                break
        else:
            choice = rng.randrange(len(actions))
        say(f"  -> {choice}")
        cfg_now = step(cfg_now, actions[choice])
    say(reason)
    if not cfg.interactive:
        _emit(cfg, "\n".join(out) + "\n")
    return status


def cmd_generate(cfg: RunConfig) -> int:
    if cfg.input.suffix != ".amg":
        raise UsageError(f"{cfg.input}: generate expects a .amg scenario file")
    if cfg.output is None:
        raise UsageError("generate needs --output")
    decl = _generate_decl(cfg.input, cfg.avoidance)
    cfg.output.write_text(pretty_print(decl))
    n_agents = sum(1 if d.size is None else d.size.value for d in decl.agents)
    print(f"wrote {cfg.output}: {len(decl.servers)} servers, {n_agents} agents")
    return EXIT_OK


def cmd_export(cfg: RunConfig) -> int:
    if cfg.output is None:
        raise UsageError("export needs --output")
    model = export(load_system(cfg.input, cfg.verbatim))
    cfg.output.write_text(model.text)
    manifest = cfg.output.with_suffix(".manifest.json")
    manifest.write_text(model.manifest_json())
    print(f"wrote {cfg.output} and {manifest}")
    return EXIT_OK


def cmd_stats(cfg: RunConfig) -> int:
    system = load_system(cfg.input, cfg.verbatim)
    st = stats(explore(system, _limits(cfg), jobs=cfg.jobs))
    if cfg.format == "json":
        _emit(cfg, to_json(st.as_dict()))
    else:
        _emit(cfg, f"configs={st.configs} edges={st.edges} terminal={st.terminal} "
                   f"complete={'yes' if st.complete else 'no'}\n")
    if not st.complete:
        _err("state space exceeds the exploration limit")
        return EXIT_LIMIT
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "simulate": cmd_simulate, "generate": cmd_generate,
            "export": cmd_export, "stats": cmd_stats}


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imds-verify",
                                description="Deadlock verification for IMDS models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def model_cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("input", type=Path)
        sp.add_argument("--output", type=Path)
        sp.add_argument("--verbatim", action="store_true",
                        help="accept the historical listing's inconsistencies as warnings")
        return sp

    v = model_cmd("verify", "explore the state space and report deadlocks")
    v.add_argument("--max-states", type=_positive)
    v.add_argument("--format", choices=("text", "json", "dot"), default="text")
    v.add_argument("--jobs", type=_positive, default=1)

    s = model_cmd("simulate", "random or interactive walk through the system")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--steps", type=_positive, default=1000)
    s.add_argument("--interactive", action="store_true")
    s.add_argument("--script", type=Path, help="file of action indices, one per line")

    g = sub.add_parser("generate", help="compile a .amg scenario into an .imds model")
    g.add_argument("input", type=Path)
    g.add_argument("--output", type=Path, required=True)
    g.add_argument("--avoidance", choices=("on", "off"))

    model_cmd("export", "write a Promela model and its name manifest")

    st = model_cmd("stats", "print state-space size")
    st.add_argument("--max-states", type=_positive)
    st.add_argument("--format", choices=("text", "json"), default="text")
    st.add_argument("--jobs", type=_positive, default=1)
    return p


def parse_args(argv=None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    avoidance = getattr(ns, "avoidance", None)
    return RunConfig(
        command=ns.command, input=ns.input, output=ns.output,
        max_states=getattr(ns, "max_states", None), format=getattr(ns, "format", "text"),
        jobs=getattr(ns, "jobs", 1), verbatim=getattr(ns, "verbatim", False),
        seed=getattr(ns, "seed", 0), steps=getattr(ns, "steps", 1000),
        interactive=getattr(ns, "interactive", False), script=getattr(ns, "script", None),
        avoidance=None if avoidance is None else avoidance == "on")


def main(argv=None) -> int:
    cfg = parse_args(argv)
    try:
        return COMMANDS[cfg.command](cfg)
    except ParseError as exc:
        _err(f"{cfg.input}:{exc}")
    except ElaborationError as exc:
        for d in exc.diagnostics:
            _err(f"{cfg.input}:{d}")
    except ScenarioError as exc:
        _err(f"{cfg.input}:{exc}")
    except (UsageError, ValueError) as exc:
        _err(f"imds-verify: {exc}")
    return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
