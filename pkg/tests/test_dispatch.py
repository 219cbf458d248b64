from __future__ import annotations

import threading

import pytest

from carapace.adaptive.backends import IRArtifact
from carapace.adaptive.config import (
    Backend,
    ConfigError,
    Granularity,
    JitConfig,
    Scope,
    SyncMode,
    UnsupportedBackend,
    parse_backend,
    parse_threshold,
)
from carapace.adaptive.dispatch import JitEngine, PlanSlot
from carapace.bench import random_graph
from carapace.corpus import gen_bundle
from carapace.engine import solve
from carapace.frontend import parse
from carapace.planner import CQ, lower_semi_naive, walk

from conftest import TC

INF = float("inf")


def _handled(result, granularity):
    engine = JitEngine(JitConfig(granularity=granularity))
    return {n.node_id for n in walk(result.root) if engine.handles(n)}


@pytest.mark.parametrize("granularity", list(Granularity))
def test_infinite_threshold_plans_each_node_once(tc_chain, granularity):
    r = solve(tc_chain, JitConfig(granularity=granularity, freshness=INF))
    nodes = _handled(r, granularity)
    assert r.stats.replan_count() == len(nodes)
    assert {e.node for e in r.stats.replans} == nodes


def test_zero_threshold_iteration_granularity_replans_every_visit(tc_chain):
    r = solve(tc_chain, JitConfig(granularity=Granularity.ITERATION, freshness=0.0))
    assert r.stats.replan_count() == 4
    assert r.rows("path") == solve(tc_chain).rows("path")


def test_events_record_snapshot_and_adoption(tc_chain):
    r = solve(tc_chain, JitConfig(granularity=Granularity.CQ, freshness=0.0))
    assert all(e.adopted for e in r.stats.replans)
    assert all(isinstance(k, str) and "." in k for e in r.stats.replans for k in e.snapshot)


@pytest.mark.parametrize("backend", [Backend.IRGEN, Backend.PIPELINE])
@pytest.mark.parametrize("granularity", list(Granularity))
def test_async_with_slow_worker_matches_interpretation(tc_chain, backend, granularity):
    cfg = JitConfig(granularity=granularity, backend=backend, sync=SyncMode.ASYNC,
                    freshness=0.0, worker_delay=0.2)
    r = solve(tc_chain, cfg)
    assert r.derived() == solve(tc_chain).derived()


def test_async_adopts_when_worker_is_fast():
    program, facts = gen_bundle(5, 0).load()
    cfg = JitConfig(sync=SyncMode.ASYNC, freshness=0.0)
    r = solve(program, cfg, facts=facts)
    assert r.derived() == solve(program, facts=facts).derived()


@pytest.mark.parametrize("sync", list(SyncMode))
def test_failed_build_falls_back_to_interpretation(sync):
    # large enough that async failures reach a later safe point
    program = parse(TC)
    facts = {"edge": random_graph(150, 400, seed=2)}

    def boom(node_id):
        raise RuntimeError(f"cannot build {node_id}")

    r = solve(program, JitConfig(sync=sync, freshness=0.0), facts=facts, fault=boom)
    assert r.rows("path") == solve(program, facts=facts).rows("path")
    assert r.stats.failures
    assert not r.stats.compiled_runs
    failed = {f.split(":")[0] for f in r.stats.failures}
    assert len(failed) == len(r.stats.failures)  # each node gives up once


def test_single_node_failure_leaves_others_compiled(tc_chain):
    root = lower_semi_naive(tc_chain)
    victim = next(n.node_id for n in walk(root) if isinstance(n, CQ))

    def fault(node_id):
        if node_id == victim:
            raise RuntimeError("nope")

    cfg = JitConfig(backend=Backend.PIPELINE, freshness=0.0)
    r = solve(tc_chain, cfg, fault=fault)
    assert r.rows("path") == solve(tc_chain).rows("path")
    assert victim not in r.stats.compiled_runs
    assert r.stats.compiled_runs


def test_snippet_scope_counts_child_reorders():
    program, facts = gen_bundle(1, 0).load()
    cfg = JitConfig(granularity=Granularity.ITERATION, backend=Backend.PIPELINE,
                    scope=Scope.SNIPPET, freshness=0.0)
    r = solve(program, cfg, facts=facts)
    assert r.derived() == solve(program, facts=facts).derived()
    assert r.stats.snippet_reorders >= 0


def test_plan_slot_discards_stale_generations(tc_chain):
    node = next(n for n in walk(lower_semi_naive(tc_chain)) if isinstance(n, CQ))
    slot = PlanSlot()
    a, b = IRArtifact(node, 2), IRArtifact(node, 1)
    slot.publish(2, a)
    slot.publish(1, b)
    gen, art, err = slot.take()
    assert (gen, art, err) == (2, a, None)
    assert slot.take() is None and not slot.ready


def test_plan_slot_entries_are_never_torn():
    slot = PlanSlot()
    stop = threading.Event()
    torn = []

    def writer():
        g = 0
        while not stop.is_set():
            g += 1
            art = IRArtifact.__new__(IRArtifact)
            art.generation = g
            slot.publish(g, art)

    t = threading.Thread(target=writer)
    t.start()
    seen = 0
    for _ in range(20_000):
        entry = slot.take()
        if entry is None:
            continue
        seen += 1
        gen, art, _ = entry
        if art.generation != gen:
            torn.append(entry)
    stop.set()
    t.join()
    assert seen > 0 and torn == []


def test_config_rejects_unsupported_backends():
    for name in ("quotes", "bytecode"):
        with pytest.raises(UnsupportedBackend, match="unsupported on this build"):
            JitConfig(backend=parse_backend(name)).check()


def test_config_aliases_and_errors():
    assert parse_backend("lambda") is Backend.PIPELINE
    assert parse_backend("lambda-alias") is Backend.PIPELINE
    with pytest.raises(ConfigError):
        parse_backend("nope")
    with pytest.raises(ConfigError):
        JitConfig(scope=Scope.SNIPPET).check()
    assert parse_threshold("inf") == INF
    with pytest.raises((ConfigError, ValueError)):
        parse_threshold("-1")
