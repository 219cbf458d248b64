"""Adaptive ordering against adversarially written rule bodies.

For each adversarial program, runs the interpreter on the written order and
the JIT with default settings, and reports wall-clock, join probes and the
order the JIT settled on.

    python3 scripts/adversarial_speedup.py --tc-nodes 2000 --pt-size 140
"""
from __future__ import annotations

import argparse
import statistics
import sys
import time

from carapace.adaptive.config import JitConfig
from carapace.bench import load_suite, points_to_facts, program_text, random_graph
from carapace.engine import solve
from carapace.frontend import parse


def timed(program, facts, config, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = solve(program, config, facts=facts)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), result


def compare(name, program, facts, repeat):
    interp_t, interp = timed(program, facts, None, repeat)
    jit_t, jit = timed(program, facts, JitConfig(), repeat)
    assert jit.derived() == interp.derived(), f"{name}: results differ"
    print(f"{name}\tinterp {interp_t:.2f}s\tjit {jit_t:.2f}s\tspeedup {interp_t / jit_t:.2f}"
          f"\tprobes {interp.stats.total_probes} -> {jit.stats.total_probes}"
          f"\treplans {jit.stats.replan_count()}")


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--tc-nodes", type=int, default=1000)
    p.add_argument("--pt-size", type=int, default=140,
                   help="points-to variables; the written order builds a pt x pt cross product")
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    tc = parse(program_text("tc-adversarial"))
    compare("tc-adversarial", tc, {"edge": random_graph(args.tc_nodes, 3 * args.tc_nodes, args.seed)},
            args.repeat)
    pt, _ = load_suite("points-to-adversarial")
    compare("points-to-adversarial", pt, points_to_facts(args.pt_size, args.seed), args.repeat)
    return 0


if __name__ == "__main__":
    sys.exit(main())
