from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from conftest import SMALL, index_of, level0_proof
from micro import MICRO, micro_source
from soupgen.engine import CHECK_KINDS, DomainConfig, ResourceBudget, build_program, verify
from soupgen.engine.reference import enumerate_paths
from soupgen.engine.semantics import c_div, c_mod, domain_values
from soupgen.minic import ast as A
from soupgen.proof import LoopBoundMap, PreconditionTerm


def violated_kinds(report):
    return {c.kind for c in report.checks if c.id in report.violated_ids}


def test_micro_table_covers_every_kind():
    assert set(MICRO) == set(CHECK_KINDS)
    assert len(MICRO) == 20


@pytest.mark.parametrize("kind", sorted(MICRO))
def test_violating_program_reports_its_kind(kind):
    index = index_of({"m.mc": micro_source(MICRO[kind][0])})
    report = verify(level0_proof(index, "entry"), index)
    assert report.status == "violations-found"
    assert kind in violated_kinds(report)


@pytest.mark.parametrize("kind", sorted(MICRO))
def test_safe_program_is_verified(kind):
    index = index_of({"m.mc": micro_source(MICRO[kind][1])})
    report = verify(level0_proof(index, "entry"), index)
    assert report.status == "verified"
    assert report.verified_properties == report.covered_properties


LOOP = """
u32 walk(u32 n) {
  u8 a[4];
  u32 s = 0;
  for (u32 i = 0; i < n; i++) {
    a[i] = 1;
    s = s + 1;
  }
  return s;
}
"""


def test_loop_bound_saturates_and_marks_incomplete():
    index = index_of({"w.mc": LOOP})
    proof = level0_proof(index, "walk")
    rep = verify(proof, index)
    assert rep.saturated_loops == {"walk.0"}
    assert rep.incomplete_ids
    assert rep.status == "verified"
    assert rep.verified_properties < rep.covered_properties


def test_raising_the_bound_exposes_the_overrun():
    index = index_of({"w.mc": LOOP})
    proof = level0_proof(index, "walk")
    # bound 4 lets i reach 3; bound 5 reaches a[4]
    four = verify(replace(proof, bounds=LoopBoundMap.of({"walk.0": 4})), index)
    five = verify(replace(proof, bounds=LoopBoundMap.of({"walk.0": 5})), index)
    assert "array-upper-bound" not in violated_kinds(four)
    assert "array-upper-bound" in violated_kinds(five)


def test_state_budget_breach_is_inconclusive():
    index = index_of({"w.mc": LOOP})
    rep = verify(level0_proof(index, "walk"), index, ResourceBudget(state_budget=1))
    assert rep.status == "inconclusive-budget"
    assert rep.verified_ids == frozenset()


def test_preconditions_restrict_paths():
    index = index_of({"w.mc": LOOP})
    proof = level0_proof(index, "walk")
    bounded = replace(proof, bounds=LoopBoundMap.of({"walk.0": 17}))
    loose = verify(bounded, index)
    tight = verify(replace(bounded, env=bounded.env.add_preconditions(
        [PreconditionTerm.var_const("n", "<=", 4)])), index)
    assert "array-upper-bound" in violated_kinds(loose)
    assert not violated_kinds(tight)
    assert loose.violation_paths["array-upper-bound@w.mc:6:1"] == 12
    assert tight.violation_paths == {}


def test_witness_replays_to_the_violation():
    index = index_of({"m.mc": micro_source(MICRO["div-by-zero"][0])})
    rep = verify(level0_proof(index, "entry"), index)
    (check, witness), = rep.violations
    assert check.kind == "div-by-zero"
    assert list(witness.nondet_assignment.values()) == [0]
    assert witness.trace


def test_report_json_is_stable():
    index = index_of({"w.mc": LOOP})
    proof = level0_proof(index, "walk")
    a = verify(proof, index).to_json(include_time=False)
    b = verify(proof, index).to_json(include_time=False)
    assert a == b
    assert '"schema_version"' in a


@pytest.mark.parametrize("kind", ["array-upper-bound", "double-free", "memcpy-overlap"])
def test_micro_programs_agree_with_reference(kind):
    for body in MICRO[kind]:
        index = index_of({"m.mc": micro_source(body)})
        proof = level0_proof(index, "entry", SMALL.alloc_cap)
        rep = verify(proof, index, domains=SMALL, witnesses=False)
        prog = build_program(proof, index)
        ref = enumerate_paths(prog, SMALL)
        assert rep.violated_ids == {prog.check_by_key[k].id for k in ref.violated}
        assert rep.covered_ids == {prog.check_by_key[k].id for k in ref.covered}


@given(st.integers(-50, 50), st.integers(-50, 50).filter(lambda b: b != 0))
def test_c_division_truncates_toward_zero(a, b):
    q, r = c_div(a, b), c_mod(a, b)
    assert q * b + r == a
    assert abs(r) < abs(b)
    assert r == 0 or (r > 0) == (a > 0)


@given(st.sampled_from(["u8", "u32", "i32", "size_t"]), st.integers(1, 20))
@settings(max_examples=40)
def test_domains_stay_in_type_range(base, cap):
    ty = A.Ty(base)
    vals = domain_values(ty, DomainConfig(int_cap=cap))
    lo, hi = A.RANGE[base]
    assert all(lo <= v <= hi for v in vals)
    assert len(set(vals)) == len(vals)
