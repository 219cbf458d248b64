"""Physical CQ plans and the prebuilt operator library.

``plan_cq`` turns a CQ descriptor into a left-deep list of steps over a
binding tuple (one slot per bound variable).  The interpreter executes the
steps through the generic ``Storage`` operators; the pipeline backend turns
each step into one of the prebuilt operator closures below and chains them.
Closures never capture storage contents, only the handle passed at call time.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from operator import itemgetter
from typing import Callable, Sequence, Union

from carapace.frontend import Builtin, Const, Term, Var, is_number
from carapace.planner import CQDescriptor, ScanAtom
from carapace.storage import Storage, View, key_getter, tuple_getter

Operand = tuple  # ("slot", index) | ("const", value)


@dataclass(frozen=True)
class ScanStep:
    relation: str
    view: View
    filters: tuple
    columns: tuple[int, ...]


@dataclass(frozen=True)
class JoinStep:
    relation: str
    view: View
    filters: tuple
    keys: tuple[tuple[int, int], ...]  # (binding slot, relation column)
    columns: tuple[int, ...]


@dataclass(frozen=True)
class FilterStep:
    op: str
    left: Operand
    right: Operand


@dataclass(frozen=True)
class BindStep:
    op: str
    left: Operand
    right: Operand
    check: int | None  # slot already holding the target, or None to append


Step = Union[ScanStep, JoinStep, FilterStep, BindStep]


@dataclass(frozen=True)
class CQPlan:
    target: str
    steps: tuple[Step, ...]
    head: tuple[Operand, ...]
    inputs: tuple[tuple[str, View], ...]


# ---------------------------------------------------------------------------
# built-in semantics


def arith(op: str, a: int, b: int) -> int | None:
    """int64 arithmetic; symbols or out-of-range results yield None."""
    if not (is_number(a) and is_number(b)):
        return None
    if op == "+":
        r = a + b
    elif op == "-":
        r = a - b
    else:
        r = a * b
    return r if is_number(r) else None


def compare(op: str, a: int, b: int) -> bool:
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    # order comparisons are defined on numbers only
    if not (is_number(a) and is_number(b)):
        return False
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


# ---------------------------------------------------------------------------
# plan derivation


def _scan_filters(atom: ScanAtom) -> tuple:
    return tuple(("const", c, v) for c, v in atom.const_filters) + tuple(
        ("eq", c, first) for c, first in atom.repeat_filters)


@lru_cache(maxsize=8192)
def plan_cq(d: CQDescriptor) -> CQPlan:
    slots: dict[str, int] = {}
    steps: list[Step] = []

    def operand(t: Term) -> Operand:
        if isinstance(t, Const):
            return ("const", t.value)
        assert t.name in slots, f"built-in reads unbound variable {t.name}"
        return ("slot", slots[t.name])

    for lit in d.ordered():
        if isinstance(lit, ScanAtom):
            keys, columns = [], []
            fresh: dict[str, int] = {}
            for col, t in enumerate(lit.terms):
                if not isinstance(t, Var) or t.name in fresh:
                    continue
                if t.name in slots:
                    keys.append((slots[t.name], col))
                else:
                    fresh[t.name] = col
                    columns.append(col)
            if not steps:
                steps.append(ScanStep(lit.relation, lit.view, _scan_filters(lit), tuple(columns)))
            else:
                steps.append(JoinStep(lit.relation, lit.view, _scan_filters(lit),
                                      tuple(keys), tuple(columns)))
            for name in fresh:
                slots[name] = len(slots)
        elif isinstance(lit, Builtin) and lit.is_binding:
            left, right = operand(lit.left), operand(lit.right)
            name = lit.target.name
            if name in slots:
                steps.append(BindStep(lit.op, left, right, slots[name]))
            else:
                steps.append(BindStep(lit.op, left, right, None))
                slots[name] = len(slots)
        else:
            steps.append(FilterStep(lit.op, operand(lit.left), operand(lit.right)))
    head = tuple(operand(t) for t in d.head)
    return CQPlan(d.target, tuple(steps), head, tuple(d.views()))


def _value(b: tuple, o: Operand) -> int:
    return b[o[1]] if o[0] == "slot" else o[1]


def run_plan(plan: CQPlan, storage: Storage, counter: list[int] | None = None) -> int:
    """Generic execution through the storage operators (interpreter path)."""
    for rel, view in plan.inputs:
        if storage.cardinality(rel, view) == 0:
            return 0
    stream: list[tuple] = [()]
    for step in plan.steps:
        if isinstance(step, ScanStep):
            get = tuple_getter(step.columns)
            stream = [get(t) for t in storage.select(step.relation, step.view, step.filters)]
        elif isinstance(step, JoinStep):
            stream = storage.join(stream, (step.relation, step.view), step.keys,
                                  step.filters, step.columns, counter)
        elif isinstance(step, FilterStep):
            stream = [b for b in stream
                      if compare(step.op, _value(b, step.left), _value(b, step.right))]
        else:
            out = []
            for b in stream:
                r = arith(step.op, _value(b, step.left), _value(b, step.right))
                if r is None:
                    continue
                if step.check is None:
                    out.append(b + (r,))
                elif b[step.check] == r:
                    out.append(b)
            stream = out
        if not stream:
            return 0
    return storage.insert_many(plan.target, project(plan.head)(stream))


# ---------------------------------------------------------------------------
# prebuilt operator library
#
# Every factory returns ``fn(storage, stream, counter) -> stream``.

Operator = Callable[[Storage, list, list], list]


def _predicate(filters: tuple) -> Callable[[tuple], bool] | None:
    if not filters:
        return None
    consts = [(f[1], f[2]) for f in filters if f[0] == "const"]
    eqs = [(f[1], f[2]) for f in filters if f[0] == "eq"]
    if len(consts) == 1 and not eqs:
        c, v = consts[0]
        return lambda t: t[c] == v
    return lambda t: all(t[c] == v for c, v in consts) and all(t[a] == t[b] for a, b in eqs)


def scan(relation: str, view: View, columns: Sequence[int]) -> Operator:
    get = tuple_getter(columns)

    def op(storage, stream, counter):
        return [get(t) for t in storage.view(relation, view)]
    return op


def filtered_scan(relation: str, view: View, filters: tuple, columns: Sequence[int]) -> Operator:
    get = tuple_getter(columns)
    keep = _predicate(filters)

    def op(storage, stream, counter):
        return [get(t) for t in storage.view(relation, view) if keep(t)]
    return op


def hash_join(relation: str, view: View, filters: tuple,
              keys: Sequence[tuple[int, int]], columns: Sequence[int]) -> Operator:
    """Build on the relation view, probe once per incoming binding."""
    left_key = key_getter([k[0] for k in keys])
    right_key = key_getter([k[1] for k in keys])
    payload = tuple_getter(columns)
    keep = _predicate(filters)

    def op(storage, stream, counter):
        table: dict = {}
        for t in storage.view(relation, view):
            if keep is None or keep(t):
                k = right_key(t)
                bucket = table.get(k)
                if bucket is None:
                    table[k] = [payload(t)]
                else:
                    bucket.append(payload(t))
        counter[0] += len(stream)
        get = table.get
        return [b + p for b in stream for p in get(left_key(b), ())]
    return op


def _operand_fn(o: Operand) -> Callable[[tuple], int]:
    if o[0] == "slot":
        return itemgetter(o[1])
    v = o[1]
    return lambda b: v


def builtin_filter(op_name: str, left: Operand, right: Operand) -> Operator:
    lf, rf = _operand_fn(left), _operand_fn(right)

    def op(storage, stream, counter):
        return [b for b in stream if compare(op_name, lf(b), rf(b))]
    return op


def binding_builtin(op_name: str, left: Operand, right: Operand, check: int | None) -> Operator:
    lf, rf = _operand_fn(left), _operand_fn(right)

    def op(storage, stream, counter):
        out = []
        for b in stream:
            r = arith(op_name, lf(b), rf(b))
            if r is None:
                continue
            if check is None:
                out.append(b + (r,))
            elif b[check] == r:
                out.append(b)
        return out
    return op


def project(head: Sequence[Operand]) -> Callable[[list], list]:
    if all(o[0] == "slot" for o in head):
        get = tuple_getter([o[1] for o in head])
        return lambda stream: [get(b) for b in stream]
    fns = [_operand_fn(o) for o in head]
    return lambda stream: [tuple(f(b) for f in fns) for b in stream]


def insert(target: str) -> Callable[[Storage, list], int]:
    def op(storage, rows):
        return storage.insert_many(target, rows)
    return op


def operator_for(step: Step) -> Operator:
    if isinstance(step, ScanStep):
        if step.filters:
            return filtered_scan(step.relation, step.view, step.filters, step.columns)
        return scan(step.relation, step.view, step.columns)
    if isinstance(step, JoinStep):
        return hash_join(step.relation, step.view, step.filters, step.keys, step.columns)
    if isinstance(step, FilterStep):
        return builtin_filter(step.op, step.left, step.right)
    return binding_builtin(step.op, step.left, step.right, step.check)


def compile_plan(plan: CQPlan) -> Callable[[Storage, list], int]:
    """Chain prebuilt operators into one callable ``fn(storage, counter) -> inserted``."""
    ops = [operator_for(s) for s in plan.steps]
    proj = project(plan.head)
    ins = insert(plan.target)
    inputs = plan.inputs

    def run(storage: Storage, counter: list) -> int:
        for rel, view in inputs:
            if storage.cardinality(rel, view) == 0:
                return 0
        stream: list = [()]
        for op in ops:
            stream = op(storage, stream, counter)
            if not stream:
                return 0
        return ins(storage, proj(stream))
    return run
