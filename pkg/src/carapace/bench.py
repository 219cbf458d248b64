"""Built-in benchmark suite: programs, seeded fact generators, and timing."""
from __future__ import annotations

import random
import statistics
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

from carapace.adaptive.config import JitConfig
from carapace.engine import Result, solve
from carapace.frontend import Program, parse

Facts = dict[str, set[tuple[int, ...]]]


def random_graph(nodes: int, edges: int, seed: int) -> set[tuple[int, int]]:
    """``edges`` distinct directed edges without self loops."""
    rng = random.Random(seed)
    out: set[tuple[int, int]] = set()
    limit = nodes * (nodes - 1)
    edges = min(edges, limit)
    while len(out) < edges:
        a, b = rng.randrange(nodes), rng.randrange(nodes)
        if a != b:
            out.add((a, b))
    return out


def tc_facts(size: int, seed: int) -> Facts:
    return {"edge": random_graph(size, 3 * size, seed)}


def points_to_facts(size: int, seed: int) -> Facts:
    """Synthetic program facts: ``size`` variables, ``size // 4`` heap objects."""
    rng = random.Random(seed)
    nvars, nobjs = size, max(2, size // 4)

    def pairs(n: int, left: int, right: int) -> set[tuple[int, int]]:
        return {(rng.randrange(left), rng.randrange(right)) for _ in range(n)}

    return {
        "alloc": pairs(nvars // 2, nvars, nobjs),
        "assign": pairs(nvars, nvars, nvars),
        "param": pairs(nvars // 2, nvars, nvars),
        "load": pairs(nvars // 4, nvars, nvars),
        "store": pairs(nvars // 4, nvars, nvars),
    }


def ackermann_facts(size: int, seed: int) -> Facts:
    return {"nat": {(i,) for i in range(size + 1)}, "level": {(m,) for m in range(4)}}


def fibonacci_facts(size: int, seed: int) -> Facts:
    return {"bound": {(size,)}}


def primes_facts(size: int, seed: int) -> Facts:
    return {"nat": {(i,) for i in range(size + 1)}}


def equal_facts(size: int, seed: int) -> Facts:
    rng = random.Random(seed)
    return {"elem": {(i,) for i in range(size)},
            "same": {(rng.randrange(size), rng.randrange(size)) for _ in range(size // 2)}}


def cba_facts(size: int, seed: int) -> Facts:
    rng = random.Random(seed)
    nsets, nvals = size, max(2, size // 2)
    return {
        "elem": {(rng.randrange(nvals), rng.randrange(nsets)) for _ in range(size)},
        "subset": {(rng.randrange(nsets), rng.randrange(nsets)) for _ in range(size)},
        "cond": {(rng.randrange(nvals), rng.randrange(nsets), rng.randrange(nsets), rng.randrange(nsets))
                 for _ in range(size // 2)},
    }


@dataclass(frozen=True)
class Suite:
    name: str
    program: str
    facts: Callable[[int, int], Facts]
    size: int


SUITES: dict[str, Suite] = {s.name: s for s in (
    Suite("tc", "tc.dl", tc_facts, 200),
    Suite("tc-adversarial", "tc-adversarial.dl", tc_facts, 200),
    Suite("points-to", "points-to.dl", points_to_facts, 200),
    Suite("points-to-adversarial", "points-to-adversarial.dl", points_to_facts, 200),
    Suite("ackermann", "ackermann.dl", ackermann_facts, 60),
    Suite("fibonacci", "fibonacci.dl", fibonacci_facts, 80),
    Suite("primes", "primes.dl", primes_facts, 60),
    Suite("equal", "equal.dl", equal_facts, 60),
    Suite("cba", "cba.dl", cba_facts, 60),
)}


def program_text(name: str) -> str:
    return resources.files("carapace.benchmarks").joinpath(SUITES[name].program).read_text("utf-8")


def load_suite(name: str, size: int | None = None, seed: int = 0) -> tuple[Program, Facts]:
    suite = SUITES[name]
    return parse(program_text(name)), suite.facts(size or suite.size, seed)


@dataclass
class Timing:
    suite: str
    label: str
    times: list[float] = field(default_factory=list)
    probes: int = 0
    tuples: int = 0

    @property
    def median(self) -> float:
        return statistics.median(self.times)


def time_run(program: Program, facts: Facts, config: JitConfig | None,
             repeat: int = 3, warmup: int = 1) -> tuple[list[float], Result]:
    result = None
    for _ in range(warmup):
        solve(program, config, facts=facts)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = solve(program, config, facts=facts)
        times.append(time.perf_counter() - t0)
    return times, result


def bench(suites: list[str], configs: dict[str, JitConfig | None], size: int | None = None,
          seed: int = 0, repeat: int = 3, warmup: int = 1) -> list[Timing]:
    """Median wall-clock per (suite, configuration); ``None`` config = interp."""
    rows = []
    for name in suites:
        program, facts = load_suite(name, size, seed)
        for label, cfg in configs.items():
            times, result = time_run(program, facts, cfg, repeat, warmup)
            rows.append(Timing(name, label, times, result.stats.total_probes,
                               sum(len(v) for v in result.derived().values())))
    return rows


def format_table(rows: list[Timing], baseline: str = "interp") -> str:
    base = {r.suite: r.median for r in rows if r.label == baseline}
    lines = ["suite\tconfig\tmedian_s\tspeedup\tprobes\ttuples"]
    for r in rows:
        ref = base.get(r.suite)
        speed = f"{ref / r.median:.2f}" if ref and r.median > 0 else "-"
        lines.append(f"{r.suite}\t{r.label}\t{r.median:.4f}\t{speed}\t{r.probes}\t{r.tuples}")
    return "\n".join(lines) + "\n"
