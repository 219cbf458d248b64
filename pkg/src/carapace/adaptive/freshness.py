"""Cardinality snapshots at safe points and the freshness gate."""
from __future__ import annotations

import math
from itertools import combinations
from typing import Iterable

from carapace.adaptive.config import Granularity
from carapace.planner import IROp, ScanAtom, cq_nodes
from carapace.storage import CardinalitySnapshot, Storage, View


def snapshot_keys(node: IROp, granularity: Granularity) -> tuple[tuple[str, View], ...]:
    """Views whose counts a snapshot for ``node`` records.

    Iteration granularity records Derived counts only; finer granularities
    also record the Delta views the node's CQs read.
    """
    keys: set[tuple[str, View]] = set()
    for cq in cq_nodes(node):
        for lit in cq.descriptor.literals:
            if not isinstance(lit, ScanAtom):
                continue
            if lit.view is View.EDB:
                keys.add((lit.relation, View.EDB))
                continue
            keys.add((lit.relation, View.KNOWN_DERIVED))
            if lit.view is View.KNOWN_DELTA and granularity is not Granularity.ITERATION:
                keys.add((lit.relation, View.KNOWN_DELTA))
    return tuple(sorted(keys, key=lambda k: (k[0], k[1].value)))


def snapshot(storage: Storage, granularity: Granularity, node: IROp | None = None,
             iteration: int = 0, keys: Iterable[tuple[str, View]] | None = None) -> CardinalitySnapshot:
    """Capture counts for ``node`` (or every stored relation when ``node`` is None)."""
    if keys is None:
        if node is not None:
            keys = snapshot_keys(node, granularity)
        else:
            keys = []
            for name in sorted(storage.relations):
                if storage.is_edb(name):
                    keys.append((name, View.EDB))
                else:
                    keys.append((name, View.KNOWN_DERIVED))
                    if granularity is not Granularity.ITERATION:
                        keys.append((name, View.KNOWN_DELTA))
    return storage.snapshot(iteration, keys)


def _inverted(prev: dict, cur: dict) -> bool:
    for a, b in combinations(sorted(prev.keys() & cur.keys(), key=lambda k: (k[0], k[1].value)), 2):
        before = prev[a] - prev[b]
        after = cur[a] - cur[b]
        if before * after < 0:
            return True
    return False


def fresh(prev: CardinalitySnapshot | None, cur: CardinalitySnapshot, theta: float) -> bool:
    """True when the counts moved enough that a new plan is worth computing.

    Fires when two relations swap places in cardinality order, or when some
    count changes by more than ``theta`` relative to its previous value.
    ``theta = inf`` turns the gate off entirely so that a plan, once made,
    is kept; ``prev = None`` (first visit) is always fresh.
    """
    if prev is None:
        return True
    if math.isinf(theta):
        return False
    p, c = dict(prev.counts), dict(cur.counts)
    if _inverted(p, c):
        return True
    for key in p.keys() | c.keys():
        old, new = p.get(key, 0), c.get(key, 0)
        if abs(new - old) / max(old, 1) > theta:
            return True
    return False
