"""State-space growth with the number of AMPs on a generated road.

Road markers m1..mK in a line; AMP i starts in lot Si beside mi and drives
to lot Di beside m(i+1).  All traffic runs the same way, so the models are
deadlock free and the growth is pure interleaving.
"""
import argparse
import time

from imds_verify.deadlock import find_deadlocks
from imds_verify.model import elaborate
from imds_verify.scenario import generate, parse_graph
from imds_verify.statespace import ExplorationLimits, explore


def scenario(n: int) -> str:
    lines = [f"node m{i} marker" for i in range(1, n + 2)]
    lines += [f"edge m{i} m{i + 1}" for i in range(1, n + 1)]
    for i in range(1, n + 1):
        lines += [f"node S{i} lot", f"node D{i} lot", f"edge S{i} m{i}", f"edge D{i} m{i + 1}",
                  f"itinerary AMP[{i}]: S{i} -> m{i} -> m{i + 1} -> D{i}"]
    return "\n".join(lines) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-agents", type=int, default=4)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--max-states", type=int, default=2_000_000)
    args = ap.parse_args()
    print(f"{'AMPs':>4} {'configs':>10} {'edges':>10} {'deadlocks':>9} {'seconds':>8}")
    for n in range(1, args.max_agents + 1):
        sys = elaborate(generate(*parse_graph(scenario(n))))
        t0 = time.perf_counter()
        lts = explore(sys, ExplorationLimits(args.max_states), jobs=args.jobs)
        dl = len(find_deadlocks(lts, sys)) if lts.complete else "n/a"
        print(f"{n:>4} {len(lts.configs):>10} {len(lts.edges):>10} {dl!s:>9} "
              f"{time.perf_counter() - t0:>8.2f}")
        if not lts.complete:
            print("exploration limit reached")
            break


if __name__ == "__main__":
    main()
