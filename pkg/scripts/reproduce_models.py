"""Verify the hand-written two-AMP model and the generated road scenarios.

Writes the server view (DOT) and agent view (text) of every deadlock to
``--out`` and prints a one-line summary per model.
"""
import argparse
from importlib.resources import files
from pathlib import Path

from imds_verify.model import elaborate
from imds_verify.report import build_report
from imds_verify.scenario import generate, parse_graph
from imds_verify.statespace import explore
from imds_verify.syntax import parse

FIXTURES = files("imds_verify").joinpath("fixtures")
MODELS = ["two_amp.imds", "two_amp_verbatim.imds", "road_noavoid.amg",
          "road_avoid.amg", "single_amp.amg"]


def load(name):
    text = FIXTURES.joinpath(name).read_text()
    if name.endswith(".amg"):
        return elaborate(generate(*parse_graph(text)))
    return elaborate(parse(text).decl, strict=name != "two_amp_verbatim.imds")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("reproduction"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in MODELS:
        sys = load(name)
        doc = build_report(sys, explore(sys), source=name)
        stem = name.rsplit(".", 1)[0]
        for k, d in enumerate(doc["deadlocks"], start=1):
            (args.out / f"{stem}_deadlock{k}.dot").write_text(d["server_view_dot"])
            (args.out / f"{stem}_deadlock{k}.txt").write_text(d["agent_view"])
        shapes = "; ".join(f"{d['scope']}/{d['server_scope']} {'+'.join(d['dead_servers'])}"
                           for d in doc["deadlocks"]) or "none"
        print(f"{name:22} configs={doc['lts']['configs']:4} "
              f"terminations={doc['termination_configs']} deadlocks: {shapes}")
    print(f"views written to {args.out}/")


if __name__ == "__main__":
    main()
