from __future__ import annotations

import math

from hypothesis import given
from hypothesis import strategies as st

from carapace.adaptive.config import Granularity
from carapace.adaptive.freshness import fresh, snapshot
from carapace.interpreter import ExecContext, exec_node
from carapace.planner import DoWhile, IterationSeq, lower_semi_naive, walk
from carapace.storage import CardinalitySnapshot, Storage, View


def s(**counts):
    return CardinalitySnapshot(0, {(k, View.KNOWN_DERIVED): v for k, v in counts.items()})


def test_rank_inversion_is_fresh_for_any_theta():
    for theta in (0.0, 0.25, 0.5, 10.0, 1e9):
        assert fresh(s(A=100, B=10), s(A=100, B=130), theta)


def test_small_changes_below_threshold():
    assert not fresh(s(A=100, B=10), s(A=110, B=11), 0.5)
    assert fresh(s(A=100, B=10), s(A=110, B=11), 0.05)


def test_identical_snapshots_never_fresh():
    assert not fresh(s(A=3, B=4), s(A=3, B=4), 0.0)


def test_first_visit_always_fresh():
    assert fresh(None, s(A=1), math.inf)


def test_infinite_threshold_disables_gate():
    assert not fresh(s(A=100, B=10), s(A=1, B=1000), math.inf)


def test_zero_threshold_any_change():
    assert fresh(s(A=100), s(A=101), 0.0)


def test_relative_change_uses_floor_of_one():
    assert fresh(s(A=0), s(A=2), 1.5)
    assert not fresh(s(A=0), s(A=1), 1.5)


@given(st.dictionaries(st.sampled_from("ABCD"), st.integers(0, 100), min_size=1))
def test_reflexive(counts):
    assert not fresh(s(**counts), s(**counts), 0.0)


@given(st.dictionaries(st.sampled_from("ABCD"), st.integers(0, 100), min_size=1),
       st.dictionaries(st.sampled_from("ABCD"), st.integers(0, 100), min_size=1),
       st.floats(0, 5))
def test_monotone_in_theta(a, b, theta):
    if fresh(s(**a), s(**b), theta + 1):
        assert fresh(s(**a), s(**b), theta)


def _tc_after_first_iteration(tc_chain):
    root = lower_semi_naive(tc_chain)
    storage = Storage()
    storage.load_edb("edge", 2, tc_chain.edb_facts["edge"])
    storage.declare_idb("path", 2)
    ctx = ExecContext(storage)
    init = next(n for n in walk(root) if isinstance(n, IterationSeq) and n.kind == "init")
    exec_node(init, ctx)
    loop = next(n for n in walk(root) if isinstance(n, DoWhile)).body
    return storage, loop


def test_iteration_snapshot_records_derived_only(tc_chain):
    storage, loop = _tc_after_first_iteration(tc_chain)
    snap = snapshot(storage, Granularity.ITERATION, loop, iteration=1)
    assert snap.counts[("path", View.KNOWN_DERIVED)] == 3
    assert ("path", View.KNOWN_DELTA) not in snap.counts


def test_cq_snapshot_records_delta(tc_chain):
    storage, loop = _tc_after_first_iteration(tc_chain)
    snap = snapshot(storage, Granularity.CQ, loop, iteration=1)
    assert snap.counts[("path", View.KNOWN_DELTA)] == 3
    assert snap.counts[("edge", View.EDB)] == 3


def test_empty_database_snapshot():
    storage = Storage()
    storage.load_edb("e", 1, [])
    storage.declare_idb("p", 1)
    snap = snapshot(storage, Granularity.RULE)
    assert set(snap.counts.values()) == {0}
    assert set(snap.counts) == {("e", View.EDB), ("p", View.KNOWN_DERIVED), ("p", View.KNOWN_DELTA)}
