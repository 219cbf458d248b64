"""Tree-walking evaluation of the IROp program."""
from __future__ import annotations

import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from carapace.operators import plan_cq, run_plan
from carapace.planner import (
    CQ,
    CQDescriptor,
    DoWhile,
    EdbLoad,
    IROp,
    IterationSeq,
    ProgramRoot,
    RuleUnion,
    SwapClear,
)
from carapace.storage import Storage, View

if TYPE_CHECKING:
    from carapace.adaptive.dispatch import JitEngine


@dataclass
class ReplanEvent:
    node: str
    iteration: int
    generation: int
    adopted: bool = False
    snapshot: dict = field(default_factory=dict)


@dataclass
class ExecStats:
    iterations: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    loop_iterations: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    # (stratum, iteration within stratum, relation, derived, delta)
    cardinality_log: list[tuple[int, int, str, int, int]] = field(default_factory=list)
    stratum_time: dict[int, float] = field(default_factory=dict)
    wall: float = 0.0
    probes: Counter = field(default_factory=Counter)
    cq_runs: Counter = field(default_factory=Counter)  # CQs executed by the interpreter
    compiled_runs: Counter = field(default_factory=Counter)  # CQs executed by compiled code
    replans: list[ReplanEvent] = field(default_factory=list)
    snippet_reorders: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def total_iterations(self) -> int:
        return sum(self.iterations.values())

    @property
    def total_probes(self) -> int:
        return sum(self.probes.values())

    def replan_count(self, node: str | None = None) -> int:
        return sum(1 for e in self.replans if node is None or e.node == node)


class ExecContext:
    def __init__(self, storage: Storage, stats: ExecStats | None = None,
                 jit: JitEngine | None = None):
        self.storage = storage
        self.stats = stats if stats is not None else ExecStats()
        self.jit = jit
        self._counters: dict[str, list[int]] = {}

    def counter(self, node_id: str) -> list[int]:
        c = self._counters.get(node_id)
        if c is None:
            c = self._counters[node_id] = [0]
        return c

    def flush_counters(self) -> None:
        for node_id, c in self._counters.items():
            self.stats.probes[node_id] += c[0]
            c[0] = 0

    def swap(self, op: SwapClear) -> None:
        self.storage.swap_and_clear(op.relations)
        self.stats.iterations[op.stratum] += 1
        n = self.stats.iterations[op.stratum]
        for rel in op.relations:
            self.stats.cardinality_log.append(
                (op.stratum, n, rel,
                 self.storage.cardinality(rel, View.KNOWN_DERIVED),
                 self.storage.cardinality(rel, View.KNOWN_DELTA)))


def interpret(op: IROp, ctx: ExecContext) -> None:
    """Evaluate ``op``; nodes at the JIT's granularity go through the JIT."""
    jit = ctx.jit
    if jit is not None and jit.handles(op):
        jit.dispatch(op, ctx)
        return
    exec_node(op, ctx)


def exec_node(op: IROp, ctx: ExecContext, start: int = 0) -> None:
    """Interpret ``op`` itself, resuming at child ``start``."""
    if isinstance(op, CQ):
        eval_cq(op.descriptor, ctx, op.node_id)
    elif isinstance(op, (IterationSeq, RuleUnion)):
        for child in op.children[start:]:
            interpret(child, ctx)
    elif isinstance(op, SwapClear):
        ctx.swap(op)
    elif isinstance(op, DoWhile):
        while True:
            ctx.stats.loop_iterations[op.stratum] += 1
            interpret(op.body, ctx)
            if not ctx.storage.diff_nonempty(op.watched):
                break
    elif isinstance(op, EdbLoad):
        ctx.storage.ensure_edb(op.relation, op.arity)
    elif isinstance(op, ProgramRoot):
        for e in op.edb:
            interpret(e, ctx)
        for stratum in op.strata:
            t0 = time.perf_counter()
            interpret(stratum, ctx)
            ctx.stats.stratum_time[stratum.stratum] = time.perf_counter() - t0
        ctx.flush_counters()
    else:  # pragma: no cover
        raise TypeError(f"unknown IROp {op!r}")


def eval_cq(d: CQDescriptor, ctx: ExecContext, node_id: str | None = None) -> int:
    """Run one CQ as a left-deep pipeline; returns the number of new tuples."""
    node_id = node_id or f"r{d.rule_id}.d{d.delta_index}"
    storage = ctx.storage
    storage.begin_eval()
    try:
        n = run_plan(plan_cq(d), storage, ctx.counter(node_id))
    finally:
        storage.end_eval()
    ctx.stats.cq_runs[node_id] += 1
    return n
