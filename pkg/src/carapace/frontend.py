"""Textual Datalog dialect: AST types, parser, printer, validation and the
relation precedence graph.

The dialect is Souffle-flavoured::

    .decl edge(x: symbol, y: symbol)     // optional
    edge("a", "b").
    path(x, y) :- edge(x, y).
    path(x, z) :- edge(x, y), path(y, z).
    fib(n, r) :- fib(m, a), fib(k, b), m = k + 1, n = m + 1, r = a + b.
    .output path

String constants are interned to integer ids at parse time, so every tuple
downstream of the parser is a plain vector of Python ints.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Union

import networkx as nx

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1
# Symbol ids live just above the int64 range so they never collide with numbers.
SYMBOL_BASE = 2**63

COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")
ARITHMETIC = ("+", "-", "*")


class DatalogError(Exception):
    """Base class for frontend errors."""


class ParseError(DatalogError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class ArityError(DatalogError):
    def __init__(self, relation: str, expected: int, got: int):
        super().__init__(f"arity mismatch for relation '{relation}': expected {expected}, got {got}")
        self.relation = relation


class ProgramError(DatalogError):
    """Raised by strict parsing when validation reports diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


def is_number(value: int) -> bool:
    return INT64_MIN <= value <= INT64_MAX


class SymbolTable:
    """Interns string constants to dense ids starting at ``SYMBOL_BASE``."""

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._names: list[str] = []

    def intern(self, name: str) -> int:
        sid = self._ids.get(name)
        if sid is None:
            sid = SYMBOL_BASE + len(self._names)
            self._ids[name] = sid
            self._names.append(name)
        return sid

    def name(self, value: int) -> str:
        return self._names[value - SYMBOL_BASE]

    def render(self, value: int) -> str:
        """Plain-text form used in TSV files."""
        return str(value) if is_number(value) else self.name(value)

    def literal(self, value: int) -> str:
        """Source form used by the program printer."""
        if is_number(value):
            return str(value)
        escaped = self.name(value).replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'

    def __len__(self) -> int:
        return len(self._names)


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    value: int


Term = Union[Var, Const]


@dataclass(frozen=True)
class Atom:
    predicate: str
    terms: tuple[Term, ...]

    @property
    def arity(self) -> int:
        return len(self.terms)

    def variables(self) -> list[str]:
        seen: list[str] = []
        for t in self.terms:
            if isinstance(t, Var) and t.name not in seen:
                seen.append(t.name)
        return seen


@dataclass(frozen=True)
class Builtin:
    """A comparison ``left op right`` or a binding ``target = left op right``.

    Binding built-ins have ``target`` set and ``op`` in ``ARITHMETIC``.
    """

    op: str
    left: Term
    right: Term
    target: Var | None = None

    @property
    def is_binding(self) -> bool:
        return self.target is not None

    def inputs(self) -> set[str]:
        return {t.name for t in (self.left, self.right) if isinstance(t, Var)}

    def variables(self) -> set[str]:
        names = self.inputs()
        if self.target is not None:
            names.add(self.target.name)
        return names


Literal = Union[Atom, Builtin]


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Literal, ...]
    id: int

    def atoms(self) -> list[Atom]:
        return [lit for lit in self.body if isinstance(lit, Atom)]

    def builtins(self) -> list[Builtin]:
        return [lit for lit in self.body if isinstance(lit, Builtin)]


@dataclass
class Program:
    edb_facts: dict[str, set[tuple[int, ...]]]
    rules: list[Rule]
    arities: dict[str, int]
    symbols: SymbolTable = field(default_factory=SymbolTable)
    outputs: frozenset[str] | None = None

    @property
    def idb(self) -> frozenset[str]:
        return frozenset(r.head.predicate for r in self.rules)

    @property
    def edb(self) -> frozenset[str]:
        return frozenset(self.arities) - self.idb

    def output_relations(self) -> list[str]:
        if self.outputs is None:
            return sorted(self.idb)
        return sorted(self.outputs)

    def rules_for(self, relation: str) -> list[Rule]:
        return [r for r in self.rules if r.head.predicate == relation]

    def canonical(self) -> tuple:
        """Structure with symbols decoded; equal across re-interning."""

        def term(t: Term):
            if isinstance(t, Var):
                return ("var", t.name)
            return ("const", self.symbols.literal(t.value))

        def lit(x: Literal):
            if isinstance(x, Atom):
                return ("atom", x.predicate, tuple(term(t) for t in x.terms))
            return ("builtin", x.op, term(x.left), term(x.right),
                    None if x.target is None else x.target.name)

        facts = tuple(sorted(
            (rel, tuple(sorted(tuple(self.symbols.literal(v) for v in row) for row in rows)))
            for rel, rows in self.edb_facts.items()
        ))
        rules = tuple((lit(r.head), tuple(lit(b) for b in r.body)) for r in self.rules)
        return facts, rules, tuple(sorted(self.arities.items())), self.outputs


# ---------------------------------------------------------------------------
# Rule metadata


@dataclass(frozen=True)
class AtomMetadata:
    variable_positions: dict[str, tuple[int, ...]]
    constant_positions: tuple[tuple[int, int], ...]  # (column, value)
    repeated_positions: tuple[frozenset[int], ...]  # groups of columns sharing a variable


@dataclass(frozen=True)
class RuleMetadata:
    atoms: tuple[AtomMetadata, ...]
    # one entry per head column: ("const", value) | ("atom", atom_idx, col) | ("builtin", body_idx)
    head_projection: tuple[tuple, ...]


def atom_metadata(atom: Atom) -> AtomMetadata:
    positions: dict[str, list[int]] = {}
    consts = []
    for i, t in enumerate(atom.terms):
        if isinstance(t, Var):
            positions.setdefault(t.name, []).append(i)
        else:
            consts.append((i, t.value))
    repeated = tuple(frozenset(p) for p in positions.values() if len(p) > 1)
    return AtomMetadata({k: tuple(v) for k, v in positions.items()}, tuple(consts), repeated)


def rule_metadata(rule: Rule) -> RuleMetadata:
    atoms = rule.atoms()
    metas = tuple(atom_metadata(a) for a in atoms)
    projection = []
    for t in rule.head.terms:
        if isinstance(t, Const):
            projection.append(("const", t.value))
            continue
        entry = None
        for ai, meta in enumerate(metas):
            if t.name in meta.variable_positions:
                entry = ("atom", ai, meta.variable_positions[t.name][0])
                break
        if entry is None:
            for bi, lit in enumerate(rule.body):
                if isinstance(lit, Builtin) and lit.target is not None and lit.target.name == t.name:
                    entry = ("builtin", bi)
                    break
        if entry is None:
            raise DatalogError(f"head variable {t.name} of rule {rule.id} is unbound")
        projection.append(entry)
    return RuleMetadata(metas, tuple(projection))


# ---------------------------------------------------------------------------
# Lexer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<directive>\.(?:decl|output|input)\b)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<int>[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:-|!=|<=|>=|[().,=<>+\-*:])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.i = 0
        self.symbols = SymbolTable()
        self.arities: dict[str, int] = {}
        self.facts: dict[str, list[tuple[int, ...]]] = {}
        self.rules: list[tuple[Atom, tuple[Literal, ...]]] = []
        self.outputs: set[str] | None = None

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.column)

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind in ("string",):
            found = self.tok.text or "end of input"
            raise self.error(f"expected '{text}', found '{found}'")
        return self.advance()

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {what}, found '{found}'")
        return self.advance()

    def check_arity(self, name: str, arity: int, tok: Token) -> None:
        known = self.arities.setdefault(name, arity)
        if known != arity:
            raise ArityError(name, known, arity)

    def parse(self) -> None:
        while self.tok.kind != "eof":
            if self.tok.kind == "directive":
                self.directive()
            else:
                self.clause()

    def directive(self) -> None:
        tok = self.advance()
        if tok.text == ".decl":
            name = self.expect_kind("ident", "relation name")
            self.expect("(")
            arity = 0
            if self.tok.text != ")":
                while True:
                    self.expect_kind("ident", "attribute name")
                    if self.tok.text == ":":
                        self.advance()
                        self.expect_kind("ident", "attribute type")
                    arity += 1
                    if self.tok.text != ",":
                        break
                    self.advance()
            self.expect(")")
            self.check_arity(name.text, arity, name)
        else:
            names = [self.expect_kind("ident", "relation name").text]
            while self.tok.text == ",":
                self.advance()
                names.append(self.expect_kind("ident", "relation name").text)
            if tok.text == ".output":
                self.outputs = (self.outputs or set()) | set(names)
            # .input is accepted for compatibility; facts files are located by name.

    def term(self) -> Term:
        tok = self.tok
        if tok.kind == "ident":
            self.advance()
            return Var(tok.text)
        if tok.kind == "string":
            self.advance()
            raw = tok.text[1:-1]
            return Const(self.symbols.intern(re.sub(r"\\(.)", r"\1", raw)))
        negative = False
        if tok.text == "-":
            self.advance()
            negative = True
        num = self.expect_kind("int", "term")
        value = -int(num.text) if negative else int(num.text)
        if not is_number(value):
            raise self.error(f"integer constant {value} out of int64 range", num)
        return Const(value)

    def atom(self) -> Atom:
        name = self.expect_kind("ident", "relation name")
        self.expect("(")
        terms: list[Term] = []
        if self.tok.text != ")":
            terms.append(self.term())
            while self.tok.text == ",":
                self.advance()
                terms.append(self.term())
        self.expect(")")
        self.check_arity(name.text, len(terms), name)
        return Atom(name.text, tuple(terms))

    def literal(self) -> Literal:
        if self.tok.kind == "ident" and self.tokens[self.i + 1].text == "(":
            return self.atom()
        start = self.tok
        left = self.term()
        if self.tok.text not in COMPARISONS:
            raise self.error("expected a comparison operator")
        op = self.advance().text
        right = self.term()
        if self.tok.text in ARITHMETIC:
            if op != "=" or not isinstance(left, Var):
                raise self.error("arithmetic is only allowed as 'var = term op term'", start)
            arith = self.advance().text
            rhs = self.term()
            return Builtin(arith, right, rhs, target=left)
        return Builtin(op, left, right)

    def clause(self) -> None:
        head_tok = self.tok
        head = self.atom()
        if self.tok.text == ".":
            self.advance()
            for t in head.terms:
                if isinstance(t, Var):
                    raise ParseError(
                        f"fact for '{head.predicate}' contains non-constant term '{t.name}'",
                        head_tok.line, head_tok.column,
                    )
            self.facts.setdefault(head.predicate, []).append(tuple(t.value for t in head.terms))
            return
        self.expect(":-")
        body = [self.literal()]
        while self.tok.text == ",":
            self.advance()
            body.append(self.literal())
        self.expect(".")
        self.rules.append((head, tuple(body)))


def parse(source: str, strict: bool = True) -> Program:
    """Parse program text.

    With ``strict`` (the default) the program is validated and a
    ``ProgramError`` carrying every diagnostic is raised if it is not
    well-formed; pass ``strict=False`` to get the raw program for
    :func:`validate`.
    """
    p = _Parser(source)
    p.parse()
    rules = [Rule(head, body, i) for i, (head, body) in enumerate(p.rules)]
    heads = {r.head.predicate for r in rules}
    edb_facts: dict[str, set[tuple[int, ...]]] = {}
    arities = dict(p.arities)
    for rel, rows in p.facts.items():
        if rel in heads:
            # relation with both facts and rules: move the facts aside
            synthetic = _fresh_name(f"{rel}__facts", arities)
            arities[synthetic] = arities[rel]
            edb_facts[synthetic] = set(rows)
            vars_ = tuple(Var(f"x{i}") for i in range(arities[rel]))
            rules.append(Rule(Atom(rel, vars_), (Atom(synthetic, vars_),), len(rules)))
        else:
            edb_facts[rel] = set(rows)
    outputs = frozenset(p.outputs) if p.outputs is not None else None
    program = Program(edb_facts, rules, arities, p.symbols, outputs)
    if strict:
        diagnostics = validate(program)
        if diagnostics:
            raise ProgramError(diagnostics)
    return program


def _fresh_name(base: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    name, k = base, 1
    while name in taken:
        name = f"{base}{k}"
        k += 1
    return name


# ---------------------------------------------------------------------------
# Printer


def format_term(t: Term, symbols: SymbolTable) -> str:
    return t.name if isinstance(t, Var) else symbols.literal(t.value)


def format_literal(lit: Literal, symbols: SymbolTable) -> str:
    if isinstance(lit, Atom):
        return f"{lit.predicate}({', '.join(format_term(t, symbols) for t in lit.terms)})"
    left, right = format_term(lit.left, symbols), format_term(lit.right, symbols)
    if lit.target is not None:
        return f"{lit.target.name} = {left} {lit.op} {right}"
    return f"{left} {lit.op} {right}"


def format_rule(rule: Rule, symbols: SymbolTable) -> str:
    body = ", ".join(format_literal(b, symbols) for b in rule.body)
    return f"{format_literal(rule.head, symbols)} :- {body}."


def format_program(program: Program) -> str:
    lines = []
    for rel in sorted(program.arities):
        lines.append(f".decl {rel}({', '.join(f'c{i}' for i in range(program.arities[rel]))})")
    for rel in sorted(program.edb_facts):
        for row in sorted(program.edb_facts[rel]):
            args = ", ".join(program.symbols.literal(v) for v in row)
            lines.append(f"{rel}({args}).")
    for rule in program.rules:
        lines.append(format_rule(rule, program.symbols))
    if program.outputs is not None:
        for rel in sorted(program.outputs):
            lines.append(f".output {rel}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    rule: int | None
    message: str

    def __str__(self) -> str:
        where = f"rule {self.rule}: " if self.rule is not None else ""
        return f"{where}{self.kind}: {self.message}"


def bindable_order(body: Iterable[Literal]) -> tuple[set[str], list[Builtin]]:
    """Variables bound by some admissible order, and built-ins no order can place."""
    body = list(body)
    bound: set[str] = set()
    for lit in body:
        if isinstance(lit, Atom):
            bound.update(lit.variables())
    pending = [lit for lit in body if isinstance(lit, Builtin)]
    progress = True
    while progress and pending:
        progress = False
        for b in list(pending):
            if b.inputs() <= bound and (b.is_binding or b.variables() <= bound):
                if b.target is not None:
                    bound.add(b.target.name)
                pending.remove(b)
                progress = True
    return bound, pending


def validate(program: Program) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    arities: dict[str, int] = {}

    def check_arity(atom: Atom, rule_id: int | None) -> None:
        expected = arities.setdefault(atom.predicate, program.arities.get(atom.predicate, atom.arity))
        if atom.arity != expected:
            diags.append(Diagnostic("arity", rule_id,
                                    f"relation '{atom.predicate}' used with arity {atom.arity}, "
                                    f"declared {expected}"))

    for rel, rows in program.edb_facts.items():
        for row in rows:
            check_arity(Atom(rel, tuple(Const(v) for v in row)), None)
    for rule in program.rules:
        check_arity(rule.head, rule.id)
        atoms = rule.atoms()
        for a in atoms:
            check_arity(a, rule.id)
        if not atoms:
            diags.append(Diagnostic("no-relation-atom", rule.id,
                                    f"body of '{rule.head.predicate}' has no relation atom"))
            continue
        bound, stuck = bindable_order(rule.body)
        for b in stuck:
            diags.append(Diagnostic("unbindable-builtin", rule.id,
                                    f"built-in '{format_literal(b, program.symbols)}' has no "
                                    f"admissible position (inputs never bound)"))
        for t in rule.head.terms:
            if isinstance(t, Var) and t.name not in bound:
                diags.append(Diagnostic("range-restriction", rule.id,
                                        f"head variable '{t.name}' of '{rule.head.predicate}' "
                                        f"is not bound by the body"))
    return diags


# ---------------------------------------------------------------------------
# Precedence graph


@dataclass(frozen=True)
class PrecedenceGraph:
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]  # (head relation, body relation)
    strata: tuple[frozenset[str], ...]
    recursive: tuple[bool, ...]

    def stratum_of(self, relation: str) -> int:
        for i, s in enumerate(self.strata):
            if relation in s:
                return i
        return -1


def build_precedence(program: Program) -> PrecedenceGraph:
    idb = program.idb
    first_seen: dict[str, int] = {}
    edges: set[tuple[str, str]] = set()
    for rule in program.rules:
        first_seen.setdefault(rule.head.predicate, len(first_seen))
        for a in rule.atoms():
            edges.add((rule.head.predicate, a.predicate))
    graph = nx.DiGraph()
    graph.add_nodes_from(sorted(idb))
    # evaluation order edges: body relation must precede head relation
    graph.add_edges_from((body, head) for head, body in edges if body in idb)
    cond = nx.condensation(graph)
    order = nx.lexicographical_topological_sort(
        cond, key=lambda c: min(first_seen[m] for m in cond.nodes[c]["members"])
    )
    strata = []
    recursive = []
    for c in order:
        scc = frozenset(cond.nodes[c]["members"])
        strata.append(scc)
        recursive.append(len(scc) > 1 or any((r, r) in edges for r in scc))
    nodes = frozenset(program.arities) | idb
    return PrecedenceGraph(nodes, frozenset(edges), tuple(strata), tuple(recursive))
