"""One-call evaluation: rewrite, (pre)sort, lower, and interpret a program."""
from __future__ import annotations

import gc
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from carapace.adaptive.config import JitConfig, Presort
from carapace.adaptive.dispatch import JitEngine
from carapace.adaptive.ordering import presort
from carapace.frontend import Program, build_precedence
from carapace.interpreter import ExecContext, ExecStats, interpret
from carapace.planner import ProgramRoot, lower_naive, lower_semi_naive, rewrite
from carapace.storage import Storage


_gc_lock = threading.Lock()
_gc_depth = 0
_gc_was_enabled = False


@contextmanager
def gc_paused():
    """Suspend the cyclic collector while relations grow.

    Relations are sets of int tuples and cannot form cycles, but millions of
    fresh tuples would otherwise trigger repeated full collections.  Nested
    and concurrent users share one pause.
    """
    global _gc_depth, _gc_was_enabled
    with _gc_lock:
        if _gc_depth == 0:
            _gc_was_enabled = gc.isenabled()
            gc.disable()
        _gc_depth += 1
    try:
        yield
    finally:
        with _gc_lock:
            _gc_depth -= 1
            if _gc_depth == 0 and _gc_was_enabled:
                gc.enable()


@dataclass
class Result:
    program: Program
    root: ProgramRoot
    storage: Storage
    stats: ExecStats

    def rows(self, relation: str) -> set[tuple[int, ...]]:
        return set(self.storage.derived(relation))

    def derived(self) -> dict[str, frozenset[tuple[int, ...]]]:
        """Final Derived set of every IDB relation."""
        return {r: frozenset(self.storage.derived(r)) for r in sorted(self.program.idb)}

    def decoded(self, relation: str) -> set[tuple]:
        sym = self.program.symbols
        return {tuple(sym.render(v) for v in t) for t in self.storage.derived(relation)}


def prepare(program: Program, config: JitConfig | None = None,
            facts: Mapping[str, Iterable[tuple[int, ...]]] | None = None,
            naive: bool = False) -> tuple[Program, ProgramRoot, dict[str, set]]:
    edb = {rel: set(program.edb_facts.get(rel, ())) for rel in program.edb}
    for rel, rows in (facts or {}).items():
        edb.setdefault(rel, set()).update(rows)
    p = rewrite(program)
    if config is not None and config.presort is not Presort.OFF:
        counts = {rel: len(edb.get(rel, ())) for rel in p.edb}
        p = presort(p, counts, config.presort)
    graph = build_precedence(p)
    root = lower_naive(p, graph) if naive else lower_semi_naive(p, graph)
    return p, root, edb


def solve(program: Program, config: JitConfig | None = None, *,
          facts: Mapping[str, Iterable[tuple[int, ...]]] | None = None,
          naive: bool = False, storage: Storage | None = None,
          fault: Callable[[str], None] | None = None) -> Result:
    """Evaluate ``program``.  ``config=None`` means pure interpretation."""
    p, root, edb = prepare(program, config, facts, naive)
    storage = storage if storage is not None else Storage()
    for rel in sorted(p.edb):
        storage.load_edb(rel, p.arities[rel], edb.get(rel, ()))
    for rel in sorted(p.idb):
        storage.declare_idb(rel, p.arities[rel])
    jit = JitEngine(config, fault) if config is not None else None
    ctx = ExecContext(storage, ExecStats(), jit)
    t0 = time.perf_counter()
    try:
        with gc_paused():
            interpret(root, ctx)
    finally:
        if jit is not None:
            jit.close()
    ctx.stats.wall = time.perf_counter() - t0
    return Result(p, root, storage, ctx.stats)
