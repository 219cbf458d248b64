"""Logical planning: static rewrites and lowering of rules into the IROp tree.

Tree shape for one recursive stratum::

    IterationSeq[stratum]
      IterationSeq[init]     non-recursive rules of the stratum, then SwapClear
      DoWhile(watched)
        IterationSeq[loop]   one RuleUnion per recursive rule, one CQ per delta
                             version, then SwapClear

A non-recursive stratum is a single ``IterationSeq[once]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Union

from carapace.frontend import (
    Atom,
    Builtin,
    Const,
    Literal,
    PrecedenceGraph,
    Program,
    Rule,
    Term,
    Var,
    build_precedence,
)
from carapace.storage import View

# IterationSeq kinds that are dispatch points at iteration granularity
ITERATION_KINDS = frozenset({"once", "init", "loop"})


@dataclass(frozen=True)
class ScanAtom:
    """A body atom bound to a storage view, with its pushed-down filters."""

    relation: str
    view: View
    terms: tuple[Term, ...]

    @property
    def const_filters(self) -> tuple[tuple[int, int], ...]:
        return tuple((i, t.value) for i, t in enumerate(self.terms) if isinstance(t, Const))

    @property
    def repeat_filters(self) -> tuple[tuple[int, int], ...]:
        """(column, earlier column holding the same variable)."""
        first: dict[str, int] = {}
        out = []
        for i, t in enumerate(self.terms):
            if isinstance(t, Var):
                if t.name in first:
                    out.append((i, first[t.name]))
                else:
                    first[t.name] = i
        return tuple(out)

    def variables(self) -> list[str]:
        seen: list[str] = []
        for t in self.terms:
            if isinstance(t, Var) and t.name not in seen:
                seen.append(t.name)
        return seen


BodyLiteral = Union[ScanAtom, Builtin]


@dataclass(frozen=True)
class CQDescriptor:
    rule_id: int
    target: str
    head: tuple[Term, ...]
    literals: tuple[BodyLiteral, ...]  # textual order
    permutation: tuple[int, ...]
    delta_index: int | None = None

    def ordered(self) -> list[BodyLiteral]:
        return [self.literals[i] for i in self.permutation]

    def atom_indices(self) -> list[int]:
        return [i for i, lit in enumerate(self.literals) if isinstance(lit, ScanAtom)]

    def views(self) -> list[tuple[str, View]]:
        return [(lit.relation, lit.view) for lit in self.literals if isinstance(lit, ScanAtom)]

    def with_permutation(self, perm: tuple[int, ...]) -> CQDescriptor:
        return replace(self, permutation=tuple(perm))


# ---------------------------------------------------------------------------
# IROp tree


@dataclass(frozen=True)
class CQ:
    node_id: str
    descriptor: CQDescriptor


@dataclass(frozen=True)
class RuleUnion:
    node_id: str
    target: str
    rule_id: int
    children: tuple[CQ, ...]


@dataclass(frozen=True)
class SwapClear:
    node_id: str
    stratum: int
    relations: tuple[str, ...]


@dataclass(frozen=True)
class IterationSeq:
    node_id: str
    kind: str  # "once" | "init" | "loop" | "stratum"
    stratum: int
    children: tuple[IROp, ...]


@dataclass(frozen=True)
class DoWhile:
    node_id: str
    stratum: int
    body: IterationSeq
    watched: tuple[str, ...]


@dataclass(frozen=True)
class EdbLoad:
    node_id: str
    relation: str
    arity: int


@dataclass(frozen=True)
class ProgramRoot:
    node_id: str
    edb: tuple[EdbLoad, ...]
    strata: tuple[IterationSeq, ...]
    stratum_relations: tuple[tuple[str, ...], ...] = field(default=())


IROp = Union[ProgramRoot, DoWhile, IterationSeq, SwapClear, RuleUnion, CQ, EdbLoad]


def children(op: IROp) -> tuple[IROp, ...]:
    if isinstance(op, ProgramRoot):
        return op.edb + op.strata
    if isinstance(op, (IterationSeq, RuleUnion)):
        return op.children
    if isinstance(op, DoWhile):
        return (op.body,)
    return ()


def walk(op: IROp) -> Iterator[IROp]:
    yield op
    for c in children(op):
        yield from walk(c)


def cq_nodes(op: IROp) -> list[CQ]:
    return [n for n in walk(op) if isinstance(n, CQ)]


# ---------------------------------------------------------------------------
# Rewrites


def _alias_source(rule: Rule) -> str | None:
    """Body relation if ``rule`` is ``h(v1..vn) :- b(v1..vn)`` with distinct vars."""
    if len(rule.body) != 1 or not isinstance(rule.body[0], Atom):
        return None
    body = rule.body[0]
    if body.predicate == rule.head.predicate or body.terms != rule.head.terms:
        return None
    if not all(isinstance(t, Var) for t in body.terms):
        return None
    if len({t.name for t in body.terms}) != len(body.terms):
        return None
    return body.predicate


def rewrite(program: Program) -> Program:
    """Alias elimination.

    Consumers of an alias relation read its source relation directly.  The
    alias rule itself is dropped when nothing reads the alias any more and it
    is not an output relation (with no ``.output`` directive every IDB
    relation is an output).  Constant filters need no AST change: lowering
    turns constant terms into scan filters.
    """
    rules = list(program.rules)
    outputs = set(program.output_relations())
    while True:
        direct = {}
        for r in rules:
            src = _alias_source(r)
            if src is not None and len([q for q in rules if q.head.predicate == r.head.predicate]) == 1:
                direct[r.head.predicate] = src
        aliases = {}
        for name in direct:
            seen, cur = {name}, direct[name]
            while cur in direct and cur not in seen:
                seen.add(cur)
                cur = direct[cur]
            if cur not in seen:  # cyclic alias groups are left alone
                aliases[name] = cur
        changed = False
        new_rules = []
        for r in rules:
            if r.head.predicate in aliases and _alias_source(r) is not None:
                new_rules.append(r)
                continue
            body = []
            for lit in r.body:
                if isinstance(lit, Atom) and lit.predicate in aliases:
                    lit = Atom(aliases[lit.predicate], lit.terms)
                    changed = True
                body.append(lit)
            new_rules.append(Rule(r.head, tuple(body), r.id))
        used = {a.predicate for r in new_rules for a in r.atoms()}
        kept = [
            r for r in new_rules
            if not (r.head.predicate in aliases and r.head.predicate not in used
                    and r.head.predicate not in outputs)
        ]
        changed = changed or len(kept) != len(new_rules)
        rules = kept
        if not changed:
            break
    arities = dict(program.arities)
    return Program(dict(program.edb_facts), rules, arities, program.symbols, program.outputs)


# ---------------------------------------------------------------------------
# Lowering


def initial_permutation(literals: tuple[BodyLiteral, ...]) -> tuple[int, ...]:
    """Atoms in textual order, each built-in at its earliest admissible slot."""
    from carapace.adaptive.ordering import repair

    atoms = [i for i, lit in enumerate(literals) if isinstance(lit, ScanAtom)]
    return repair(literals, atoms)


def _descriptor(rule: Rule, views: list[View], delta_index: int | None) -> CQDescriptor:
    literals: list[BodyLiteral] = []
    k = 0
    for lit in rule.body:
        if isinstance(lit, Atom):
            literals.append(ScanAtom(lit.predicate, views[k], lit.terms))
            k += 1
        else:
            literals.append(lit)
    literals_t = tuple(literals)
    return CQDescriptor(rule.id, rule.head.predicate, rule.head.terms, literals_t,
                        initial_permutation(literals_t), delta_index)


def _base_view(relation: str, program: Program, graph: PrecedenceGraph) -> View:
    return View.KNOWN_DERIVED if relation in program.idb else View.EDB


def _lower(program: Program, graph: PrecedenceGraph | None, semi_naive: bool) -> ProgramRoot:
    graph = graph or build_precedence(program)
    edb = tuple(EdbLoad(f"edb.{rel}", rel, program.arities[rel]) for rel in sorted(program.edb))
    strata = []
    for si, (scc, recursive) in enumerate(zip(graph.strata, graph.recursive)):
        rels = tuple(sorted(scc))
        rules = [r for r in program.rules if r.head.predicate in scc]
        sid = f"s{si}"
        if not recursive:
            unions = tuple(_union(f"{sid}.once", r, program, graph, scc, None) for r in rules)
            swap = SwapClear(f"{sid}.once.swap", si, rels)
            strata.append(IterationSeq(sid, "stratum", si,
                                       (IterationSeq(f"{sid}.once", "once", si, unions + (swap,)),)))
            continue
        base = [r for r in rules if not any(a.predicate in scc for a in r.atoms())]
        rec = [r for r in rules if any(a.predicate in scc for a in r.atoms())]
        init = IterationSeq(
            f"{sid}.init", "init", si,
            tuple(_union(f"{sid}.init", r, program, graph, scc, None) for r in base)
            + (SwapClear(f"{sid}.init.swap", si, rels),),
        )
        loop_rules = rec if semi_naive else rules
        mode = "delta" if semi_naive else "naive"
        body = IterationSeq(
            f"{sid}.loop", "loop", si,
            tuple(_union(f"{sid}.loop", r, program, graph, scc, mode) for r in loop_rules)
            + (SwapClear(f"{sid}.loop.swap", si, rels),),
        )
        strata.append(IterationSeq(sid, "stratum", si,
                                   (init, DoWhile(f"{sid}.dowhile", si, body, rels))))
    return ProgramRoot("root", edb, tuple(strata), tuple(tuple(sorted(s)) for s in graph.strata))


def _union(prefix: str, rule: Rule, program: Program, graph: PrecedenceGraph,
           scc: frozenset[str], mode: str | None) -> RuleUnion:
    atoms = rule.atoms()
    base_views = [_base_view(a.predicate, program, graph) for a in atoms]
    uid = f"{prefix}.r{rule.id}"
    if mode != "delta":
        cqs = (CQ(f"{uid}.cq", _descriptor(rule, base_views, None)),)
        return RuleUnion(uid, rule.head.predicate, rule.id, cqs)
    cqs = []
    body_positions = [i for i, lit in enumerate(rule.body) if isinstance(lit, Atom)]
    for k, a in enumerate(atoms):
        if a.predicate not in scc:
            continue
        views = list(base_views)
        views[k] = View.KNOWN_DELTA
        cqs.append(CQ(f"{uid}.d{k}", _descriptor(rule, views, body_positions[k])))
    return RuleUnion(uid, rule.head.predicate, rule.id, tuple(cqs))


def lower_semi_naive(program: Program, graph: PrecedenceGraph | None = None) -> ProgramRoot:
    return _lower(program, graph, semi_naive=True)


def lower_naive(program: Program, graph: PrecedenceGraph | None = None) -> ProgramRoot:
    return _lower(program, graph, semi_naive=False)


# ---------------------------------------------------------------------------
# Debug printer


def _lit_text(lit: BodyLiteral) -> str:
    def term(t: Term) -> str:
        return t.name if isinstance(t, Var) else f"#{t.value}"

    if isinstance(lit, ScanAtom):
        return f"{lit.relation}[{lit.view.value}]({', '.join(term(t) for t in lit.terms)})"
    if lit.target is not None:
        return f"{lit.target.name}={term(lit.left)}{lit.op}{term(lit.right)}"
    return f"{term(lit.left)}{lit.op}{term(lit.right)}"


def dump_ir(op: IROp, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(op, ProgramRoot):
        line = f"{pad}ProgramRoot"
    elif isinstance(op, EdbLoad):
        line = f"{pad}EdbLoad {op.relation}/{op.arity}"
    elif isinstance(op, IterationSeq):
        line = f"{pad}IterationSeq {op.kind} s{op.stratum}"
    elif isinstance(op, DoWhile):
        line = f"{pad}DoWhile watched={','.join(op.watched)}"
    elif isinstance(op, SwapClear):
        line = f"{pad}SwapClear {','.join(op.relations)}"
    elif isinstance(op, RuleUnion):
        line = f"{pad}RuleUnion {op.target} rule={op.rule_id}"
    else:
        d = op.descriptor
        body = ", ".join(_lit_text(d.literals[i]) for i in d.permutation)
        delta = "-" if d.delta_index is None else d.delta_index
        line = f"{pad}CQ {d.target} delta={delta} perm={list(d.permutation)} :- {body}"
    lines = [line]
    for c in children(op):
        lines.append(dump_ir(c, indent + 1))
    return "\n".join(lines)
