"""Executable artifacts: regenerated IR trees and stitched operator pipelines."""
from __future__ import annotations

from dataclasses import replace
from typing import Callable, Mapping

from carapace.adaptive.config import Scope
from carapace.interpreter import ExecContext, exec_node, interpret
from carapace.operators import compile_plan, plan_cq
from carapace.planner import (
    CQ,
    DoWhile,
    IROp,
    IterationSeq,
    ProgramRoot,
    RuleUnion,
    SwapClear,
    children,
)

Orders = Mapping[str, tuple[int, ...]]


def regen_ir(node: IROp, orders: Orders) -> IROp:
    """Copy of ``node`` with the CQ permutations named in ``orders`` replaced."""
    if isinstance(node, CQ):
        perm = orders.get(node.node_id)
        if perm is None or tuple(perm) == node.descriptor.permutation:
            return node
        return CQ(node.node_id, node.descriptor.with_permutation(perm))
    if isinstance(node, (IterationSeq, RuleUnion)):
        kids = tuple(regen_ir(c, orders) for c in node.children)
        return node if kids == node.children else replace(node, children=kids)
    if isinstance(node, DoWhile):
        body = regen_ir(node.body, orders)
        return node if body is node.body else replace(node, body=body)
    if isinstance(node, ProgramRoot):
        strata = tuple(regen_ir(s, orders) for s in node.strata)
        return replace(node, strata=strata)
    return node


class Artifact:
    """Executable plan for one node.  ``run(ctx, start)`` resumes at child ``start``."""

    node_id: str
    generation: int
    op: IROp

    def run(self, ctx: ExecContext, start: int = 0) -> None:  # pragma: no cover
        raise NotImplementedError


class IRArtifact(Artifact):
    def __init__(self, op: IROp, generation: int):
        self.op = op
        self.node_id = op.node_id
        self.generation = generation

    def run(self, ctx: ExecContext, start: int = 0) -> None:
        exec_node(self.op, ctx, start)


Step = Callable[[ExecContext], None]


def _compile(op: IROp) -> Step:
    if isinstance(op, CQ):
        fn = compile_plan(plan_cq(op.descriptor))
        node_id = op.node_id

        def run_cq(ctx: ExecContext) -> None:
            storage = ctx.storage
            storage.begin_eval()
            try:
                fn(storage, ctx.counter(node_id))
            finally:
                storage.end_eval()
            ctx.stats.compiled_runs[node_id] += 1
        return run_cq
    if isinstance(op, SwapClear):
        return lambda ctx: ctx.swap(op)
    if isinstance(op, (IterationSeq, RuleUnion)):
        steps = [_compile(c) for c in op.children]

        def run_seq(ctx: ExecContext) -> None:
            for s in steps:
                s(ctx)
        return run_seq
    if isinstance(op, DoWhile):
        body = _compile(op.body)

        def run_loop(ctx: ExecContext) -> None:
            while True:
                ctx.stats.loop_iterations[op.stratum] += 1
                body(ctx)
                if not ctx.storage.diff_nonempty(op.watched):
                    break
        return run_loop
    return lambda ctx: exec_node(op, ctx)


class PipelineArtifact(Artifact):
    """Full scope: the whole subtree as chained prebuilt operators."""

    def __init__(self, op: IROp, generation: int):
        self.op = op
        self.node_id = op.node_id
        self.generation = generation
        kids = children(op)
        self._steps = [_compile(c) for c in kids] if kids else [_compile(op)]

    def run(self, ctx: ExecContext, start: int = 0) -> None:
        for s in self._steps[start:]:
            s(ctx)


class SnippetArtifact(Artifact):
    """Snippet scope: only the node's own logic is compiled; each child is
    handed back to the interpreter through ``ctx.jit.continue_child``."""

    def __init__(self, op: IROp, generation: int):
        self.op = op
        self.node_id = op.node_id
        self.generation = generation
        self._leaf = _compile(op) if not children(op) else None

    def run(self, ctx: ExecContext, start: int = 0) -> None:
        if self._leaf is not None:
            self._leaf(ctx)
            return
        jit = ctx.jit
        for i, child in enumerate(children(self.op)[start:], start):
            if jit is None:
                interpret(child, ctx)
            else:
                jit.continue_child(self, i, child, ctx)

    def replace_child(self, index: int, child: IROp) -> None:
        kids = list(children(self.op))
        kids[index] = child
        self.op = replace(self.op, children=tuple(kids))


def compile_pipeline(node: IROp, orders: Orders, scope: Scope = Scope.FULL,
                     generation: int = 0) -> Artifact:
    op = regen_ir(node, orders)
    if scope is Scope.SNIPPET:
        return SnippetArtifact(op, generation)
    return PipelineArtifact(op, generation)


def regen_artifact(node: IROp, orders: Orders, generation: int = 0) -> IRArtifact:
    return IRArtifact(regen_ir(node, orders), generation)
