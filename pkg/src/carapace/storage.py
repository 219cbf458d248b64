"""In-memory relational layer.

Every IDB relation has four logical views: Known/New x Derived/Delta.  CQ
evaluation reads Known views and writes New views; ``swap_and_clear`` at the
end of an iteration publishes the New facts.  ``new_derived`` is never stored
separately: it is the union of ``known_derived`` and ``new_delta``.
"""
from __future__ import annotations

import enum
import re
from collections import defaultdict
from dataclasses import dataclass, field
from operator import itemgetter
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from carapace.frontend import SymbolTable, is_number

Tuple_ = tuple[int, ...]


class View(enum.Enum):
    EDB = "edb"
    KNOWN_DERIVED = "known_derived"
    KNOWN_DELTA = "known_delta"
    NEW_DERIVED = "new_derived"
    NEW_DELTA = "new_delta"


class QuadrantViolation(AssertionError):
    """A CQ read a New view or a Known view was mutated mid-iteration."""


class RelationStore:
    def __init__(self, name: str, arity: int):
        self.name = name
        self.arity = arity
        self.known_derived: set[Tuple_] = set()
        self.known_delta: set[Tuple_] = set()
        self.new_delta: set[Tuple_] = set()

    def insert(self, t: Tuple_) -> bool:
        assert len(t) == self.arity, f"arity mismatch inserting into {self.name}"
        if t in self.known_derived or t in self.new_delta:
            return False
        self.new_delta.add(t)
        return True

    def insert_many(self, tuples: Iterable[Tuple_]) -> int:
        fresh = set(tuples)
        fresh -= self.known_derived
        fresh -= self.new_delta
        self.new_delta |= fresh
        return len(fresh)

    def swap_and_clear(self) -> None:
        self.known_derived |= self.new_delta
        self.known_delta = self.new_delta
        self.new_delta = set()

    def view(self, view: View):
        if view is View.KNOWN_DERIVED or view is View.EDB:
            return self.known_derived
        if view is View.KNOWN_DELTA:
            return self.known_delta
        if view is View.NEW_DELTA:
            return self.new_delta
        return self.known_derived | self.new_delta

    def count(self, view: View) -> int:
        if view is View.NEW_DERIVED:
            return len(self.known_derived) + len(self.new_delta)
        return len(self.view(view))


class EdbStore:
    def __init__(self, name: str, arity: int, tuples: Iterable[Tuple_] = ()):
        self.name = name
        self.arity = arity
        self.tuples: frozenset[Tuple_] = frozenset(tuples)

    def view(self, view: View):
        return self.tuples

    def count(self, view: View) -> int:
        return len(self.tuples)


@dataclass(frozen=True)
class CardinalitySnapshot:
    iteration: int
    counts: Mapping[tuple[str, View], int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", MappingProxyType(dict(self.counts)))

    def get(self, relation: str, view: View) -> int:
        """Count for a view; Delta falls back to Derived when not recorded."""
        key = (relation, view)
        if key in self.counts:
            return self.counts[key]
        if view is View.KNOWN_DELTA:
            return self.counts.get((relation, View.KNOWN_DERIVED), 0)
        if view is View.KNOWN_DERIVED:
            return self.counts.get((relation, View.EDB), 0)
        if view is View.EDB:
            return self.counts.get((relation, View.KNOWN_DERIVED), 0)
        return 0

    def relation_counts(self) -> dict[str, int]:
        """One number per relation (Delta where recorded, else Derived)."""
        out: dict[str, int] = {}
        for (rel, view), n in sorted(self.counts.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            if view is View.KNOWN_DELTA or rel not in out:
                out[rel] = n
        return out


Filter = tuple  # ("const", col, value) | ("eq", col_a, col_b)


def tuple_getter(cols: Sequence[int]) -> Callable[[tuple], tuple]:
    """Function extracting ``cols`` from a tuple, always returning a tuple."""
    if not cols:
        return lambda t: ()
    if len(cols) == 1:
        c = cols[0]
        return lambda t: (t[c],)
    return itemgetter(*cols)


def key_getter(cols: Sequence[int]) -> Callable[[tuple], object]:
    """Hashable key for ``cols``; scalar for one column (cheaper than a 1-tuple)."""
    if not cols:
        return lambda t: ()
    if len(cols) == 1:
        return itemgetter(cols[0])
    return itemgetter(*cols)


def _matches(t: Tuple_, filters: Sequence[Filter]) -> bool:
    for f in filters:
        if f[0] == "const":
            if t[f[1]] != f[2]:
                return False
        elif t[f[1]] != t[f[2]]:
            return False
    return True


class Storage:
    """Relational layer: EDB stores plus per-IDB quadrant stores.

    With ``debug=True`` the quadrant discipline is enforced: during CQ
    evaluation (between ``begin_eval`` and ``end_eval``) reading a New view or
    calling ``swap_and_clear`` raises ``QuadrantViolation``.
    """

    def __init__(self, debug: bool = False):
        self.relations: dict[str, RelationStore | EdbStore] = {}
        self.debug = debug
        self._evaluating = 0

    # lifecycle -------------------------------------------------------------
    def load_edb(self, name: str, arity: int, tuples: Iterable[Tuple_]) -> None:
        self.relations[name] = EdbStore(name, arity, tuples)

    def ensure_edb(self, name: str, arity: int) -> None:
        if name not in self.relations:
            self.relations[name] = EdbStore(name, arity)

    def declare_idb(self, name: str, arity: int) -> None:
        if not isinstance(self.relations.get(name), RelationStore):
            self.relations[name] = RelationStore(name, arity)

    def is_edb(self, name: str) -> bool:
        return isinstance(self.relations[name], EdbStore)

    def begin_eval(self) -> None:
        self._evaluating += 1

    def end_eval(self) -> None:
        self._evaluating -= 1

    # quadrant API ------------------------------------------------------------
    def insert(self, rel: str, view: View, t: Tuple_) -> bool:
        assert view in (View.NEW_DERIVED, View.NEW_DELTA)
        return self.relations[rel].insert(t)

    def insert_many(self, rel: str, tuples: Iterable[Tuple_]) -> int:
        return self.relations[rel].insert_many(tuples)

    def swap_and_clear(self, rels: Iterable[str]) -> None:
        if self.debug and self._evaluating:
            raise QuadrantViolation("swap_and_clear called during CQ evaluation")
        for r in rels:
            self.relations[r].swap_and_clear()

    def diff_nonempty(self, rels: Iterable[str]) -> bool:
        return any(self.relations[r].known_delta for r in rels)

    def view(self, rel: str, view: View):
        if self.debug and self._evaluating and view in (View.NEW_DERIVED, View.NEW_DELTA):
            raise QuadrantViolation(f"CQ evaluation read {view.value} of {rel}")
        return self.relations[rel].view(view)

    def cardinality(self, rel: str, view: View) -> int:
        return self.relations[rel].count(view)

    def derived(self, rel: str) -> set[Tuple_] | frozenset[Tuple_]:
        return self.relations[rel].view(View.KNOWN_DERIVED)

    def snapshot(self, iteration: int, keys: Iterable[tuple[str, View]]) -> CardinalitySnapshot:
        return CardinalitySnapshot(iteration, {k: self.cardinality(*k) for k in keys})

    # relational operators ------------------------------------------------------
    def select(self, rel: str, view: View, filters: Sequence[Filter] = ()) -> Iterator[Tuple_]:
        data = self.view(rel, view)
        if not filters:
            return iter(data)
        return (t for t in data if _matches(t, filters))

    def join(
        self,
        left: Iterable[Tuple_],
        right: tuple[str, View],
        keys: Sequence[tuple[int, int]],
        right_filters: Sequence[Filter] = (),
        right_columns: Sequence[int] | None = None,
        counter: list[int] | None = None,
    ) -> list[Tuple_]:
        """Hash join: table on the right view keyed by its join columns, probed
        once per left tuple.  Output is ``left + right[right_columns]``
        (all right columns by default).  ``counter[0]`` accumulates probes."""
        left = left if isinstance(left, list) else list(left)
        if not left:
            return []
        rel, view = right
        lkey = key_getter([k[0] for k in keys])
        rkey = key_getter([k[1] for k in keys])
        payload = tuple_getter(right_columns) if right_columns is not None else None
        table: dict = defaultdict(list)
        for t in self.select(rel, view, right_filters):
            table[rkey(t)].append(t if payload is None else payload(t))
        if counter is not None:
            counter[0] += len(left)
        get = table.get
        return [lt + p for lt in left for p in get(lkey(lt), ())]

    @staticmethod
    def project(stream: Iterable[Tuple_], indices: Sequence[int]) -> Iterator[Tuple_]:
        return (tuple(t[i] for i in indices) for t in stream)

    @staticmethod
    def union(*streams: Iterable[Tuple_]) -> set[Tuple_]:
        out: set[Tuple_] = set()
        for s in streams:
            out.update(s)
        return out


class CheckingStorage(Storage):
    """Storage that verifies delta soundness and monotonicity at every swap.

    After each swap, ``known_delta`` must equal the facts that entered
    ``known_derived`` during that swap.  Failures are collected in
    ``violations`` rather than raised so a whole run can be inspected.
    """

    def __init__(self, debug: bool = True):
        super().__init__(debug=debug)
        self.violations: list[str] = []
        self.swaps = 0

    def swap_and_clear(self, rels: Iterable[str]) -> None:
        rels = list(rels)
        before = {r: set(self.relations[r].known_derived) for r in rels}
        super().swap_and_clear(rels)
        self.swaps += 1
        for r in rels:
            now = self.relations[r].known_derived
            if not before[r] <= now:
                self.violations.append(f"swap {self.swaps}: {r} lost derived facts")
            if self.relations[r].known_delta != now - before[r]:
                self.violations.append(f"swap {self.swaps}: {r} delta != derived(now) - derived(prev)")


# ---------------------------------------------------------------------------
# Souffle-style fact files

_CANONICAL_INT = re.compile(r"-?(?:0|[1-9][0-9]*)")


def parse_value(text: str, symbols: SymbolTable) -> int:
    if _CANONICAL_INT.fullmatch(text) and text != "-0":
        value = int(text)
        if is_number(value):
            return value
    return symbols.intern(text)


def parse_facts(lines: Iterable[str], arity: int, symbols: SymbolTable,
                source: str = "<facts>") -> set[Tuple_]:
    """Parse tab-separated fact lines.

    A column holding a canonical int64 literal is read as a number, anything
    else as a symbol, so writing the tuples back reproduces every line.
    """
    rows: set[Tuple_] = set()
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n").rstrip("\r")
        if not line and arity != 0:
            continue
        cols = line.split("\t") if arity else []
        if len(cols) != arity:
            raise ValueError(f"{source}:{lineno}: expected {arity} columns, got {len(cols)}")
        rows.add(tuple(parse_value(c, symbols) for c in cols))
    return rows


def read_facts(path: Path | str, arity: int, symbols: SymbolTable) -> set[Tuple_]:
    """Read a tab-separated ``<relation>.facts`` file."""
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_facts(fh, arity, symbols, str(path))


def format_rows(rows: Iterable[Tuple_], symbols: SymbolTable) -> list[str]:
    return sorted("\t".join(symbols.render(v) for v in row) for row in rows)


def write_relation(path: Path | str, rows: Iterable[Tuple_], symbols: SymbolTable) -> None:
    lines = format_rows(rows, symbols)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("".join(line + "\n" for line in lines))
