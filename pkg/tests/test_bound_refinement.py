from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from conftest import CORPUS, index_of, level0_proof
from soupgen.agent import RuleResolver, StageLog, gate
from soupgen.bounds import (
    apply_bound, classify_gap, min_bound_to_violate, needed_iterations, run_bound_stage,
    uncovered_property_blocks,
)
from soupgen.engine import DomainConfig, ResourceBudget, verify
from soupgen.minic.index import parse_project
from soupgen.minic.parser import parse_source

BUDGET = ResourceBudget()
DOMAINS = DomainConfig()


def stage2(index, entry):
    proof = level0_proof(index, entry)
    report = verify(proof, index)
    log = StageLog()
    res = run_bound_stage(index, proof, report, BUDGET, DOMAINS, RuleResolver(), log)
    return proof, report, res, log


def test_option_loop_fixture_gets_bound_six():
    index = parse_project(CORPUS / "option_loop")
    proof, report, res, _ = stage2(index, "process_options")
    (gap,) = uncovered_property_blocks(report)
    assert gap.start == 11
    assert classify_gap(gap, proof, report, index)[0] == "loop-dependent"
    assert res.proof.bounds.as_dict() == {"process_options.0": 6}
    assert res.report.status == "verified"


def test_record_copy_bound_is_eleven():
    index = parse_project(CORPUS / "record_copy")
    _, _, res, log = stage2(index, "process_record")
    assert res.proof.bounds.as_dict() == {"process_record.0": 11}
    assert res.unapplied == []
    mutations = [e for e in log.events if e["event"] == "mutation"]
    assert mutations and all(e["stage"] == "bounds" for e in mutations)


def test_config_gap_selects_the_enabling_value():
    index = parse_project(CORPUS / "config_gap")
    proof, report, res, _ = stage2(index, "decode")
    (gap,) = uncovered_property_blocks(report)
    assert classify_gap(gap, proof, report, index)[0] == "configuration-dependent"
    assert res.proof.env.config_map == {"MODE": 5}
    assert res.report.covered_properties > report.covered_properties


def test_external_gap_havocs_the_out_parameter():
    index = parse_project(CORPUS / "havoc_gap")
    proof, report, res, _ = stage2(index, "poll")
    (gap,) = uncovered_property_blocks(report)
    assert classify_gap(gap, proof, report, index)[0] == "external-function-dependent"
    assert res.proof.env.model("read_status").side_effects == ("out",)
    assert res.report.status == "verified"


PAIR = """void read_pair(u8* status, u8* log);

i32 poll(u8* x) {
  u8 status[2];
  u8 log[2];
  status[0] = 0;
  read_pair(status, log);
  if (status[0] == 7) {
    return (i32)x[0] + 1;
  }
  return 0;
}
"""


def test_havoc_on_the_wrong_parameter_is_rejected():
    index = index_of({"pair.mc": PAIR})
    proof = level0_proof(index, "poll")
    report = verify(proof, index)
    (gap,) = uncovered_property_blocks(report)
    model = proof.env.model("read_pair")

    def attempt(param):
        cand = replace(proof, env=proof.env.with_model(replace(model, side_effects=(param,))))
        rep = verify(cand, index)
        return gate(cand, report, rep, index, gap.start in rep.covered_lines.get(gap.file, ()))

    assert attempt("log").reason == "goal not met"
    assert attempt("status").accepted
    assert attempt("x").reason.startswith("structural invalidity")


STRIDED = """void fill(u32 size) {
  assume(size >= 4);
  u8* p = malloc(size);
  for (u32 i = 0; i < size; i += 2) {
    p[i] = 0;
  }
}
"""


def test_min_bound_uses_assumed_size_and_stride():
    index = index_of({"fill.mc": STRIDED})
    assert min_bound_to_violate("fill.0", level0_proof(index, "fill"), index) == 3


def test_min_bound_from_caller_array_length():
    index = parse_project(CORPUS / "record_copy")
    assert min_bound_to_violate("process_record.0", level0_proof(index, "process_record"), index) == 11


def test_bounds_never_decrease():
    index = parse_project(CORPUS / "option_loop")
    proof = level0_proof(index, "process_options")
    proof = replace(proof, bounds=proof.bounds.with_bound("process_options.0", 4))
    report = verify(proof, index)
    with pytest.raises(ValueError):
        apply_bound("process_options.0", 3, proof, report, index, BUDGET, DOMAINS)
    same = apply_bound("process_options.0", 4, proof, report, index, BUDGET, DOMAINS)
    assert same.applied and same.reason == "no-op" and same.proof is proof


def test_over_budget_bound_is_left_unapplied():
    index = parse_project(CORPUS / "option_loop")
    proof = level0_proof(index, "process_options")
    report = verify(proof, index)
    out = apply_bound("process_options.0", 6, proof, report, index,
                      ResourceBudget(state_budget=report.states // 2), DOMAINS)
    assert not out.applied and out.reason == "budget exceeded"
    assert out.proof is proof


@given(st.integers(0, 6), st.integers(1, 4), st.integers(0, 20), st.sampled_from(["<", "<="]))
@settings(max_examples=80)
def test_needed_iterations_matches_execution(start, stride, limit, op):
    src = f"void f() {{\n  for (u32 i = {start}; i {op} {limit}; i += {stride}) {{\n  }}\n}}\n"
    fn = parse_source(src).functions[0]
    i, runs = start, 0
    while (i < limit) if op == "<" else (i <= limit):
        i += stride
        runs += 1
    assert needed_iterations(fn, fn.loops[0], {}) == runs
