from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from conftest import CORPUS, index_of, level0_proof
from soupgen.agent import RuleResolver, StageLog
from soupgen.bounds import run_bound_stage
from soupgen.engine import DomainConfig, ResourceBudget, verify
from soupgen.engine.program import holds
from soupgen.env import (
    collect_context, context_violates, hull_terms, run_env_stage, slice_precondition, weaken_term,
    with_preconditions,
)
from soupgen.minic.index import parse_project
from soupgen.proof import PreconditionTerm, ret_symbol

BUDGET = ResourceBudget()
DOMAINS = DomainConfig()
RET = ret_symbol("get_record_count")


def stage2_of(path, entry):
    index = parse_project(path)
    proof = level0_proof(index, entry)
    s2 = run_bound_stage(index, proof, verify(proof, index), BUDGET, DOMAINS, RuleResolver(), StageLog())
    return index, s2


@pytest.fixture(scope="module")
def record_copy():
    index, s2 = stage2_of(CORPUS / "record_copy", "process_record")
    s3 = run_env_stage(index, s2.proof, s2.report, BUDGET, DOMAINS, RuleResolver(), StageLog())
    return index, s2, s3


def test_slice_of_record_copy_overrun(record_copy):
    index, s2, _ = record_copy
    (q, _), = s2.report.violations
    terms = slice_precondition(q, s2.proof, index)
    assert [str(t) for t in terms] == ["dst_size >= 10", f"{RET} < 10"]


def test_record_copy_context_pins_caller_and_implementation(record_copy):
    index, s2, _ = record_copy
    ctx = collect_context(s2.proof, index, BUDGET, DOMAINS)
    assert ctx.pins["dst_size"] == {10}
    assert ctx.pins[RET] == set(range(11))
    assert ctx.unknown == []


def test_record_copy_final_precondition_and_single_error(record_copy):
    _, _, s3 = record_copy
    assert [str(t) for t in s3.proof.env.all_preconditions()] == ["dst_size >= 10", f"{RET} <= 10"]
    (err,) = s3.errors
    doc = err.to_dict()
    assert doc["property"]["id"] == "oob-pointer-deref@record.mc:11:1"
    assert doc["rejected_precondition"] == [f"pre variable-constant {RET} < 10"]
    assert doc["witness"]["nondet_assignment"]["model:get_record_count#0"] == 10


def test_handwritten_strict_bound_verifies(record_copy):
    index, s2, s3 = record_copy
    strict = [PreconditionTerm.var_const("dst_size", ">=", 10), PreconditionTerm.var_const(RET, "<", 10)]
    hand = replace(s2.proof, env=with_preconditions(s2.proof.env, strict))
    assert verify(hand, index).status == "verified"
    assert s3.report.status == "violations-found"


def test_fixed_record_copy_verifies_with_same_precondition():
    index, s2 = stage2_of(CORPUS / "record_copy_fixed", "process_record")
    s3 = run_env_stage(index, s2.proof, s2.report, BUDGET, DOMAINS, RuleResolver(), StageLog())
    assert s3.errors == []
    assert s3.report.status == "verified"
    assert [str(t) for t in s3.proof.env.all_preconditions()] == ["dst_size >= 10", f"{RET} <= 10"]


def test_unexploitable_violation_is_suppressed():
    index, s2 = stage2_of(CORPUS / "seeded" / "unexploitable_tag", "put_tag")
    s3 = run_env_stage(index, s2.proof, s2.report, BUDGET, DOMAINS, RuleResolver(), StageLog())
    assert s3.errors == []
    assert [s["outcome"] for s in s3.suppressed] == [3]


def test_grammar_fallback_picks_weakest_suppressing_term():
    index = index_of({"g.mc": "i32 scale(u8 level) {\n  return (i32)level * 67108864;\n}\n"})
    proof = level0_proof(index, "scale")
    s3 = run_env_stage(index, proof, verify(proof, index), BUDGET, DOMAINS, RuleResolver(), StageLog())
    (term,) = s3.proof.env.all_preconditions()
    assert term.subjects == ("level",)
    assert s3.report.status == "verified"
    # overflow starts at 32; among the grammar constants, 32 gives the weakest bound
    assert str(term) == "level < 32"


pins_st = st.dictionaries(st.sampled_from(["a", "b"]), st.sets(st.integers(0, 40), min_size=1, max_size=5),
                          min_size=1)
rel_st = st.sampled_from(["<", "<=", ">", ">="])


@given(pins_st, rel_st, st.integers(0, 40))
def test_weakening_ends_in_a_term_the_context_honours(pins, rel, c):
    term = PreconditionTerm.var_const("a", rel, c)
    chain = weaken_term(term, pins)
    if not context_violates(term, pins):
        assert chain is None
        return
    if "a" not in pins:
        return
    assert chain
    final = chain[-1]
    assert not context_violates(final, pins)
    # each step only admits more values
    prev = term
    for step in chain:
        for v in range(-5, 60):
            if holds(prev, {"a": v}):
                assert holds(step, {"a": v})
        prev = step


@given(pins_st)
def test_hull_terms_admit_every_pin(pins):
    for t in hull_terms(pins):
        assert not context_violates(t, pins)


@given(pins_st, st.integers(0, 40))
def test_context_violation_matches_pointwise_check(pins, c):
    term = PreconditionTerm.var_const("a", "<", c)
    expect = "a" in pins and any(v >= c for v in pins["a"])
    assert context_violates(term, pins) == expect
