"""Join ordering: sort keys, stable sort, and admissibility repair."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence, Union

from carapace.adaptive.config import Presort, SortPolicy
from carapace.frontend import Atom, Const, Program, Rule, Var
from carapace.planner import CQDescriptor, ScanAtom
from carapace.storage import CardinalitySnapshot

AnyAtom = Union[Atom, ScanAtom]


@dataclass(frozen=True)
class OrderKey:
    cardinality: int
    selectivity: Fraction

    def key(self, policy: SortPolicy) -> tuple:
        if policy is SortPolicy.SEL_THEN_CARD:
            return (self.selectivity, self.cardinality)
        return (self.cardinality, self.selectivity)


def _is_atom(lit) -> bool:
    return isinstance(lit, (Atom, ScanAtom))


def selectivity(atom: AnyAtom, bound: set[str]) -> Fraction:
    """1 - (bound positions / arity); nullary atoms count as fully bound."""
    arity = len(atom.terms)
    if arity == 0:
        return Fraction(0)
    seen: set[str] = set()
    n = 0
    for t in atom.terms:
        if isinstance(t, Const):
            n += 1
        elif t.name in bound or t.name in seen:
            n += 1
        else:
            seen.add(t.name)
    return 1 - Fraction(n, arity)


def _binds(lit) -> set[str]:
    if _is_atom(lit):
        return {t.name for t in lit.terms if isinstance(t, Var)}
    if lit.is_binding:
        return {lit.target.name}
    return set()


def admissible_now(lit, bound: set[str]) -> bool:
    if _is_atom(lit):
        return True
    if lit.is_binding:
        return lit.inputs() <= bound
    return lit.variables() <= bound


def is_admissible(literals: Sequence, permutation: Sequence[int]) -> bool:
    """Every built-in appears after the literals binding its inputs."""
    if sorted(permutation) != list(range(len(literals))):
        return False
    bound: set[str] = set()
    for i in permutation:
        lit = literals[i]
        if not admissible_now(lit, bound):
            return False
        bound |= _binds(lit)
    return True


def repair(literals: Sequence, atom_order: Sequence[int]) -> tuple[int, ...]:
    """Interleave built-ins into an atom order at their earliest admissible slots.

    Atoms keep the given order; every built-in is placed as soon as its inputs
    are bound, and built-ins that become admissible together keep their
    textual order.
    """
    pending = [i for i, lit in enumerate(literals) if not _is_atom(lit)]
    out: list[int] = []
    bound: set[str] = set()

    def flush() -> None:
        progress = True
        while progress:
            progress = False
            for i in pending:
                if admissible_now(literals[i], bound):
                    pending.remove(i)
                    out.append(i)
                    bound.update(_binds(literals[i]))
                    progress = True
                    break

    flush()
    for i in atom_order:
        out.append(i)
        bound.update(_binds(literals[i]))
        flush()
    assert not pending, "no admissible order exists"
    return tuple(out)


def order_keys(literals: Sequence, permutation: Sequence[int],
               cardinality: Mapping[int, int]) -> dict[int, OrderKey]:
    """Keys for relation atoms, with boundness taken from the given permutation."""
    keys: dict[int, OrderKey] = {}
    bound: set[str] = set()
    for i in permutation:
        lit = literals[i]
        if _is_atom(lit):
            keys[i] = OrderKey(cardinality.get(i, 0), selectivity(lit, bound))
        bound |= _binds(lit)
    return keys


def sort_atoms(literals: Sequence, permutation: Sequence[int],
               cardinality: Mapping[int, int], policy: SortPolicy) -> tuple[int, ...]:
    if policy is SortPolicy.NONE:
        return tuple(permutation)
    keys = order_keys(literals, permutation, cardinality)
    atoms = [i for i in permutation if i in keys]
    atoms = sorted(atoms, key=lambda i: keys[i].key(policy))
    return repair(literals, atoms)


def order(d: CQDescriptor, snap: CardinalitySnapshot, policy: SortPolicy) -> tuple[int, ...]:
    """New permutation for ``d`` from the cardinalities in ``snap``."""
    if policy is SortPolicy.NONE:
        return d.permutation
    card = {i: snap.get(lit.relation, lit.view)
            for i, lit in enumerate(d.literals) if isinstance(lit, ScanAtom)}
    return sort_atoms(d.literals, d.permutation, card, policy)


def presort(program: Program, edb: Mapping[str, int] | None = None,
            mode: Presort = Presort.RULES_ONLY) -> Program:
    """Reorder every rule body before evaluation.

    ``RULES_ONLY`` sorts by selectivity alone; ``FACTS_AND_RULES`` sorts by
    (initial EDB cardinality, selectivity) with IDB relations at cardinality 0.
    ``edb`` maps relation names to fact counts (defaults to the program's own
    inline facts).
    """
    if mode is Presort.OFF:
        return program
    if edb is None:
        edb = {rel: len(facts) for rel, facts in program.edb_facts.items()}
    idb = program.idb
    rules = []
    for rule in program.rules:
        body = list(rule.body)
        textual = repair(body, [i for i, lit in enumerate(body) if _is_atom(lit)])
        if mode is Presort.RULES_ONLY:
            policy = SortPolicy.SEL_THEN_CARD
            card = {i: 0 for i, lit in enumerate(body) if _is_atom(lit)}
        else:
            policy = SortPolicy.CARD_THEN_SEL
            card = {i: (0 if lit.predicate in idb else edb.get(lit.predicate, 0))
                    for i, lit in enumerate(body) if _is_atom(lit)}
        perm = sort_atoms(body, textual, card, policy)
        rules.append(Rule(rule.head, tuple(body[i] for i in perm), rule.id))
    return Program(dict(program.edb_facts), rules, dict(program.arities),
                   program.symbols, program.outputs)
