"""JIT dispatch at safe points, with blocking or asynchronous plan handoff."""
from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

from carapace.adaptive.backends import Artifact, IRArtifact, compile_pipeline, regen_ir
from carapace.adaptive.config import Backend, Granularity, JitConfig, SyncMode
from carapace.adaptive.freshness import fresh, snapshot_keys
from carapace.adaptive.ordering import order
from carapace.interpreter import ExecContext, ReplanEvent, exec_node, interpret
from carapace.planner import (
    CQ,
    ITERATION_KINDS,
    IROp,
    IterationSeq,
    RuleUnion,
    SwapClear,
    children,
    cq_nodes,
)
from carapace.storage import CardinalitySnapshot

log = logging.getLogger("carapace.jit")


class PlanSlot:
    """Single-writer, single-reader cell for a finished plan.

    The worker publishes ``(generation, artifact)`` (or a failure) under a
    lock; the evaluation thread takes the whole entry or nothing.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._entry: tuple[int, Artifact | None, BaseException | None] | None = None

    @property
    def ready(self) -> bool:
        with self._lock:
            return self._entry is not None

    def publish(self, generation: int, artifact: Artifact) -> None:
        with self._lock:
            if self._entry is None or generation > self._entry[0]:
                self._entry = (generation, artifact, None)

    def fail(self, generation: int, error: BaseException) -> None:
        with self._lock:
            self._entry = (generation, None, error)

    def take(self) -> tuple[int, Artifact | None, BaseException | None] | None:
        with self._lock:
            entry, self._entry = self._entry, None
            return entry


class ReplanWorker:
    """The single background thread that computes orders and builds artifacts."""

    def __init__(self, delay: float = 0.0):
        self.delay = delay
        self._jobs: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._loop, name="carapace-replan", daemon=True)
        self._thread.start()

    def submit(self, build: Callable[[], Artifact], slot: PlanSlot, generation: int) -> None:
        self._jobs.put((build, slot, generation))

    def _loop(self) -> None:
        while True:
            job = self._jobs.get()
            if job is None:
                return
            build, slot, generation = job
            if self.delay:
                time.sleep(self.delay)
            try:
                slot.publish(generation, build())
            except BaseException as exc:  # reported to the evaluation thread
                slot.fail(generation, exc)

    def close(self) -> None:
        self._jobs.put(None)


@dataclass
class NodeState:
    op: IROp
    artifact: Artifact | None = None
    generation: int = 0
    adopted: int = 0
    snap: CardinalitySnapshot | None = None
    inflight: bool = False
    failed: bool = False
    slot: PlanSlot = field(default_factory=PlanSlot)
    events: dict[int, ReplanEvent] = field(default_factory=dict)
    child_snaps: dict[str, CardinalitySnapshot] = field(default_factory=dict)
    visits: int = 0


def compute_orders(node: IROp, snap: CardinalitySnapshot, config: JitConfig) -> dict[str, tuple[int, ...]]:
    return {cq.node_id: order(cq.descriptor, snap, config.sort_policy) for cq in cq_nodes(node)}


class JitEngine:
    """Owns per-node plan state and decides at each safe point what to run.

    ``fault`` is an optional hook called with the node id while an artifact is
    built; raising from it simulates a failing compilation.
    """

    def __init__(self, config: JitConfig | None = None,
                 fault: Callable[[str], None] | None = None):
        self.config = (config or JitConfig()).check()
        self.fault = fault
        self.states: dict[str, NodeState] = {}
        self._worker: ReplanWorker | None = None

    # ---------------------------------------------------------------- helpers
    def handles(self, op: IROp) -> bool:
        g = self.config.granularity
        if g is Granularity.ITERATION:
            return isinstance(op, IterationSeq) and op.kind in ITERATION_KINDS
        if g is Granularity.RULE:
            return isinstance(op, RuleUnion)
        return isinstance(op, CQ)

    def _state(self, op: IROp) -> NodeState:
        st = self.states.get(op.node_id)
        if st is None:
            st = self.states[op.node_id] = NodeState(op)
        return st

    def _snapshot(self, op: IROp, ctx: ExecContext) -> CardinalitySnapshot:
        keys = snapshot_keys(op, self.config.granularity)
        return ctx.storage.snapshot(ctx.stats.total_iterations, keys)

    def build(self, op: IROp, snap: CardinalitySnapshot, generation: int) -> Artifact:
        """Pure function of its inputs; safe to run on the worker thread."""
        if self.fault is not None:
            self.fault(op.node_id)
        orders = compute_orders(op, snap, self.config)
        if self.config.backend is Backend.PIPELINE:
            return compile_pipeline(op, orders, self.config.scope, generation)
        return IRArtifact(regen_ir(op, orders), generation)

    def _record(self, st: NodeState, ctx: ExecContext, snap: CardinalitySnapshot,
                adopted: bool) -> ReplanEvent:
        ev = ReplanEvent(st.op.node_id, ctx.stats.total_iterations, st.generation, adopted,
                         {f"{r}.{v.value}": n for (r, v), n in snap.counts.items()})
        ctx.stats.replans.append(ev)
        st.events[st.generation] = ev
        return ev

    def _fallback(self, st: NodeState, ctx: ExecContext, error: BaseException) -> None:
        log.warning("replanning %s failed (%s); interpreting it from now on", st.op.node_id, error)
        ctx.stats.failures.append(f"{st.op.node_id}: {error}")
        st.failed = True
        st.inflight = False

    # --------------------------------------------------------------- dispatch
    def dispatch(self, op: IROp, ctx: ExecContext) -> None:
        st = self._state(op)
        st.visits += 1
        if self.config.sync is SyncMode.BLOCKING:
            self._dispatch_blocking(st, op, ctx)
        else:
            self._dispatch_async(st, op, ctx)

    def _dispatch_blocking(self, st: NodeState, op: IROp, ctx: ExecContext) -> None:
        if not st.failed:
            snap = self._snapshot(op, ctx)
            if fresh(st.snap, snap, self.config.freshness):
                base = st.artifact.op if st.artifact is not None else op
                try:
                    artifact = self.build(base, snap, st.generation + 1)
                except Exception as exc:
                    self._fallback(st, ctx, exc)
                else:
                    st.generation += 1
                    st.adopted = st.generation
                    st.artifact = artifact
                    st.snap = snap
                    st.child_snaps.clear()
                    self._record(st, ctx, snap, adopted=True)
        if st.artifact is not None and not st.failed:
            st.artifact.run(ctx)
        else:
            exec_node(op, ctx)

    def _poll(self, st: NodeState, ctx: ExecContext) -> bool:
        entry = st.slot.take()
        if entry is None:
            return False
        generation, artifact, error = entry
        if generation == st.generation:
            st.inflight = False
        if error is not None:
            self._fallback(st, ctx, error)
            return False
        if generation <= st.adopted:
            return False  # stale
        if artifact.generation != generation:
            ctx.stats.failures.append(f"{st.op.node_id}: torn plan publication")
            return False
        st.artifact = artifact
        st.adopted = generation
        st.child_snaps.clear()
        st.events[generation].adopted = True
        return True

    def _dispatch_async(self, st: NodeState, op: IROp, ctx: ExecContext) -> None:
        self._poll(st, ctx)
        if st.failed:
            exec_node(op, ctx)
            return
        snap = self._snapshot(op, ctx)
        if not st.inflight and fresh(st.snap, snap, self.config.freshness):
            st.generation += 1
            generation = st.generation
            base = st.artifact.op if st.artifact is not None else op
            st.snap = snap
            st.inflight = True
            self._record(st, ctx, snap, adopted=False)
            if self._worker is None:
                self._worker = ReplanWorker(self.config.worker_delay)
            self._worker.submit(lambda: self.build(base, snap, generation), st.slot, generation)
        if st.artifact is not None:
            st.artifact.run(ctx)
            return
        kids = children(op)
        if not kids:
            exec_node(op, ctx)
            return
        for i, child in enumerate(kids):
            interpret(child, ctx)
            if i + 1 < len(kids) and self._poll(st, ctx):
                # resume the new plan exactly where interpretation stopped
                st.artifact.run(ctx, start=i + 1)
                return
            if st.failed:
                exec_node(op, ctx, start=i + 1)
                return

    # ------------------------------------------------------------ snippet hook
    def continue_child(self, artifact, index: int, child: IROp, ctx: ExecContext) -> None:
        """Interpreter continuation for snippet artifacts.

        Freshness is re-checked at every child boundary; a fresh child is
        reordered in place before being interpreted.
        """
        if isinstance(child, SwapClear) or not cq_nodes(child):
            interpret(child, ctx)
            return
        st = self.states.get(artifact.node_id)
        if st is not None:
            snap = self._snapshot(child, ctx)
            prev = st.child_snaps.get(child.node_id)
            if prev is None and st.snap is not None:
                prev = CardinalitySnapshot(st.snap.iteration,
                                           {k: v for k, v in st.snap.counts.items() if k in snap.counts})
            if fresh(prev, snap, self.config.freshness):
                updated = regen_ir(child, compute_orders(child, snap, self.config))
                if updated != child:
                    artifact.replace_child(index, updated)
                    child = updated
                    ctx.stats.snippet_reorders += 1
            st.child_snaps[child.node_id] = snap
        interpret(child, ctx)

    def close(self) -> None:
        if self._worker is not None:
            self._worker.close()
            self._worker = None
