"""Seeded random Datalog programs for oracle-equivalence testing."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from carapace.frontend import DatalogError, Program, build_precedence, parse
from carapace.storage import parse_facts

COMPARE_OPS = ("!=", "<", "<=", ">", ">=", "=")
ARITH_OPS = ("+", "-", "*")
SYMBOLS = ("a", "b", "c")
VARS = ("x", "y", "z", "w")


@dataclass(frozen=True)
class Limits:
    max_arity: int = 3
    max_relations: int = 6
    max_rules: int = 8
    max_facts: int = 40
    domain: int = 6

    def __post_init__(self) -> None:
        if not (1 <= self.max_arity <= 3 and 2 <= self.max_relations <= 6
                and 1 <= self.max_rules <= 8 and 0 <= self.max_facts <= 40):
            raise ValueError("corpus limits: arity <= 3, relations 2..6, rules 1..8, facts <= 40")


@dataclass
class Bundle:
    name: str
    program: str
    facts: dict[str, str] = field(default_factory=dict)  # relation -> TSV text
    recursive: bool = False

    def to_bytes(self) -> bytes:
        parts = [f"## {self.name}\n", self.program]
        for rel in sorted(self.facts):
            parts.append(f"## {rel}.facts\n{self.facts[rel]}")
        return "".join(parts).encode("utf-8")

    def write(self, directory: Path | str) -> Path:
        root = Path(directory) / self.name
        (root / "facts").mkdir(parents=True, exist_ok=True)
        (root / "program.dl").write_text(self.program, encoding="utf-8")
        for rel, text in sorted(self.facts.items()):
            (root / "facts" / f"{rel}.facts").write_text(text, encoding="utf-8")
        return root

    def load(self) -> tuple[Program, dict[str, set[tuple[int, ...]]]]:
        """Parsed program plus its facts, typed exactly as file input would be."""
        program = parse(self.program)
        facts = {rel: parse_facts(text.splitlines(), program.arities[rel], program.symbols, rel)
                 for rel, text in self.facts.items()}
        return program, facts


class _Gen:
    def __init__(self, rng: random.Random, limits: Limits, recursive: bool):
        self.rng = rng
        self.limits = limits
        self.recursive = recursive

    def value(self) -> str:
        if self.rng.random() < 0.15:
            return self.rng.choice(SYMBOLS)
        return str(self.rng.randrange(self.limits.domain))

    def const_literal(self) -> str:
        v = self.value()
        return f'"{v}"' if v in SYMBOLS else v

    def bundle(self, name: str) -> Bundle:
        rng, lim = self.rng, self.limits
        n_rel = rng.randint(2, lim.max_relations)
        n_edb = rng.randint(1, max(1, n_rel // 2))
        edb = [f"e{i}" for i in range(n_edb)]
        idb = [f"p{i}" for i in range(n_rel - n_edb)]
        arity = {r: rng.randint(1, lim.max_arity) for r in edb + idb}
        # pairs of relations used for recursion get arity >= 2 half the time
        facts: dict[str, list[tuple[str, ...]]] = {r: [] for r in edb}
        budget = rng.randint(len(edb), lim.max_facts)
        for k in range(budget):
            r = edb[k % len(edb)]
            facts[r].append(tuple(self.value() for _ in range(arity[r])))

        n_rules = rng.randint(len(idb), lim.max_rules)
        rules: list[str] = []
        self_recursive = False
        for k in range(n_rules):
            if k < len(idb):
                # base rule: reads only EDB and lower IDB relations
                head = idb[k]
                rules.append(self.rule(head, arity, edb + idb[:k], edb))
                continue
            head = rng.choice(idb)
            pool = edb + idb if self.recursive else edb + idb[: idb.index(head)]
            if not self.recursive and not idb.index(head):
                pool = edb
            force = head if self.recursive and rng.random() < 0.7 else None
            text = self.rule(head, arity, pool, edb, force)
            self_recursive |= force is not None
            rules.append(text)
        if self.recursive and not self_recursive:
            head = rng.choice(idb)
            rules.append(self.rule(head, arity, edb + idb, edb, head))

        decls = [f".decl {r}({', '.join(f'c{i}' for i in range(arity[r]))})" for r in edb + idb]
        program = "\n".join(decls + rules) + "\n"
        fact_text = {r: "".join("\t".join(row) + "\n" for row in sorted(set(rows)))
                     for r, rows in facts.items()}
        return Bundle(name, program, fact_text)

    def rule(self, head: str, arity: dict[str, int], pool: list[str], edb: list[str],
             force: str | None = None) -> str:
        rng = self.rng
        n_atoms = rng.randint(1, 3)
        body_rels = [rng.choice(pool) for _ in range(n_atoms)]
        if force is not None:
            body_rels[rng.randrange(n_atoms)] = force
        names = VARS[: 2 + n_atoms] if n_atoms < 3 else VARS
        literals: list[str] = []
        bound: list[str] = []
        for rel in body_rels:
            terms = []
            for _ in range(arity[rel]):
                if rng.random() < 0.1:
                    terms.append(self.const_literal())
                else:
                    v = rng.choice(names)
                    terms.append(v)
                    if v not in bound:
                        bound.append(v)
            literals.append(f"{rel}({', '.join(terms)})")
        if bound and rng.random() < 0.3:
            a = rng.choice(bound)
            b = rng.choice(bound + [self.const_literal()])
            literals.append(f"{a} {rng.choice(COMPARE_OPS)} {b}")
        # arithmetic only where it cannot feed a cycle
        if bound and force is None and all(r in edb for r in body_rels) and rng.random() < 0.3:
            t = f"t{len(bound)}"
            a, b = rng.choice(bound), rng.choice(bound + [str(rng.randrange(3))])
            literals.append(f"{t} = {a} {rng.choice(ARITH_OPS)} {b}")
            bound.append(t)
        head_terms = [rng.choice(bound) if bound and rng.random() < 0.9 else self.const_literal()
                      for _ in range(arity[head])]
        rng.shuffle(literals)
        return f"{head}({', '.join(head_terms)}) :- {', '.join(literals)}."


def gen_bundle(seed: int, index: int, limits: Limits | None = None) -> Bundle:
    limits = limits or Limits()
    rng = random.Random(f"carapace-corpus:{seed}:{index}")
    recursive = index % 2 == 0 or rng.random() < 0.3
    gen = _Gen(rng, limits, recursive)
    name = f"prog{index:04d}"
    for _ in range(100):
        bundle = gen.bundle(name)
        try:
            program = parse(bundle.program)
        except DatalogError:
            continue
        bundle.recursive = any(build_precedence(program).recursive)
        return bundle
    raise RuntimeError(f"could not generate a valid program for seed {seed}, index {index}")


def gen_corpus(seed: int, count: int, limits: Limits | None = None) -> list[Bundle]:
    """``count`` bundles, deterministic per ``seed``."""
    return [gen_bundle(seed, i, limits) for i in range(count)]
