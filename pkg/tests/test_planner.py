from __future__ import annotations

from collections import Counter

from hypothesis import given
from hypothesis import strategies as st

from carapace.adaptive.ordering import is_admissible
from carapace.corpus import gen_bundle
from carapace.frontend import Const, parse
from carapace.planner import (
    CQ,
    DoWhile,
    IterationSeq,
    RuleUnion,
    ScanAtom,
    cq_nodes,
    dump_ir,
    lower_naive,
    lower_semi_naive,
    rewrite,
    walk,
)
from carapace.storage import View
from conftest import TC

TC_GOLDEN = """\
ProgramRoot
  EdbLoad edge/2
  IterationSeq stratum s0
    IterationSeq init s0
      RuleUnion path rule=0
        CQ path delta=- perm=[0] :- edge[edb](x, y)
      SwapClear path
    DoWhile watched=path
      IterationSeq loop s0
        RuleUnion path rule=1
          CQ path delta=0 perm=[0, 1] :- path[known_delta](x, y), edge[edb](y, z)
        SwapClear path"""


def rule_texts(p):
    from carapace.frontend import format_rule
    return [format_rule(r, p.symbols) for r in p.rules]


def test_alias_inlined_and_removed():
    p = parse("alias(x,y) :- edge(x,y).\np(x,z) :- alias(x,y), p(y,z).\np(x,y) :- edge(x,y).\n"
              ".output p\n")
    assert rule_texts(rewrite(p)) == ["p(x, z) :- edge(x, y), p(y, z).", "p(x, y) :- edge(x, y)."]


def test_alias_kept_when_output():
    p = parse("alias(x,y) :- edge(x,y).\np(x,z) :- alias(x,y), edge(y,z).\n")
    out = rule_texts(rewrite(p))
    assert "alias(x, y) :- edge(x, y)." in out
    assert "p(x, z) :- edge(x, y), edge(y, z)." in out


def test_alias_chains_and_cycles_terminate():
    p = parse("a(x) :- b(x).\nb(x) :- c(x).\nq(x) :- a(x), e(x).\n.output q\n")
    assert rule_texts(rewrite(p)) == ["q(x) :- c(x), e(x)."]
    cyc = parse("a(x) :- b(x).\nb(x) :- a(x).\nq(x) :- a(x).\n.output q\n")
    assert len(rewrite(cyc).rules) == 3


def test_constant_pushdown_recorded_on_scan():
    p = parse('p(x) :- q(x, "c").')
    (cq,) = cq_nodes(lower_semi_naive(rewrite(p)))
    atom = cq.descriptor.literals[0]
    c = p.symbols.intern("c")
    assert isinstance(atom, ScanAtom) and atom.const_filters == ((1, c),)


def test_rewrite_identity():
    p = parse(TC)
    assert rewrite(p).canonical() == p.canonical()


def test_tc_lowering_golden():
    assert dump_ir(lower_semi_naive(rewrite(parse(TC)))) == TC_GOLDEN


def test_one_delta_version_per_recursive_atom():
    root = lower_semi_naive(parse("r(x,z) :- r(x,y), r(y,z).\nr(x,y) :- e(x,y)."))
    loop_unions = [n for n in walk(root) if isinstance(n, RuleUnion) and ".loop." in n.node_id]
    (u,) = loop_unions
    assert [c.descriptor.delta_index for c in u.children] == [0, 1]
    views = [[lit.view for lit in c.descriptor.literals] for c in u.children]
    assert views == [[View.KNOWN_DELTA, View.KNOWN_DERIVED], [View.KNOWN_DERIVED, View.KNOWN_DELTA]]


def test_non_recursive_rule_has_no_loop():
    root = lower_semi_naive(parse("p(x) :- e(x)."))
    assert not any(isinstance(n, DoWhile) for n in walk(root))
    assert len(cq_nodes(root)) == 1
    kinds = [n.kind for n in walk(root) if isinstance(n, IterationSeq)]
    assert kinds == ["stratum", "once"]


def test_naive_lowering():
    root = lower_naive(parse(TC))
    loop = [n for n in walk(root) if isinstance(n, CQ) and ".loop." in n.node_id]
    assert len(loop) == 2  # one CQ per rule per iteration
    assert all(lit.view is not View.KNOWN_DELTA for n in cq_nodes(root) for lit in n.descriptor.literals)
    root = lower_naive(parse("r(x,z) :- r(x,y), r(y,z).\nr(x,y) :- e(x,y)."))
    rec = [n for n in walk(root) if isinstance(n, RuleUnion) and n.rule_id == 0]
    assert [len(u.children) for u in rec] == [1]


def test_builtins_moved_to_earliest_admissible_slot():
    p = parse("p(z) :- z = x + y, a(x), b(y).")
    (cq,) = cq_nodes(lower_semi_naive(p))
    assert cq.descriptor.permutation == (1, 2, 0)


def test_textual_order_kept_when_admissible():
    p = parse("p(x) :- a(x), x > 1, b(x, y).")
    (cq,) = cq_nodes(lower_semi_naive(p))
    assert cq.descriptor.permutation == (0, 1, 2)


def test_one_dowhile_per_recursive_stratum():
    p = parse("a(x) :- e(x).\na(x) :- a(x), e(x).\nb(x) :- a(x).\nb(x) :- b(x), e(x).")
    root = lower_semi_naive(p)
    assert sum(isinstance(n, DoWhile) for n in walk(root)) == 2


@given(st.integers(0, 10_000))
def test_delta_coverage_and_initial_admissibility(index):
    program = gen_bundle(7, index).load()[0]
    program = rewrite(program)
    root = lower_semi_naive(program)
    for n in walk(root):
        if isinstance(n, CQ):
            d = n.descriptor
            assert is_admissible(d.literals, d.permutation)
            deltas = [lit for lit in d.literals if isinstance(lit, ScanAtom) and lit.view is View.KNOWN_DELTA]
            assert len(deltas) == (0 if d.delta_index is None else 1)
            assert all(lit.relation in program.arities for lit in d.literals if isinstance(lit, ScanAtom))
        if isinstance(n, RuleUnion) and ".loop." in n.node_id:
            got = Counter(c.descriptor.delta_index for c in n.children)
            rule = next(r for r in program.rules if r.id == n.rule_id)
            scc = next(s for s in root.stratum_relations if rule.head.predicate in s)
            atom_pos = [i for i, lit in enumerate(rule.body) if not hasattr(lit, "op")]
            expected = Counter(i for i in atom_pos if rule.body[i].predicate in scc)
            assert got == expected


def test_constants_stay_constants():
    p = parse("p(x) :- q(x, 3).")
    (cq,) = cq_nodes(lower_semi_naive(p))
    assert cq.descriptor.literals[0].terms[1] == Const(3)
