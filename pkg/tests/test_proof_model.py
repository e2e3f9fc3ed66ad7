from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from conftest import CORPUS, index_of, level0_proof
from soupgen.minic import ast as A
from soupgen.minic.index import parse_project
from soupgen.proof import (
    EnvironmentModel, FunctionModel, InitSpec, LoopBoundMap, ManifestError, PreconditionTerm,
    ProofError, UnitProof, VerificationScope, assemble, check_structural_validity, parse_manifest,
    ret_symbol, serialize_manifest,
)

names = st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True)
consts = st.integers(-1000, 1000)
rels = st.sampled_from(["<", "<=", ">", ">=", "!=", "=="])

terms = st.one_of(
    names.map(PreconditionTerm.not_null),
    st.builds(PreconditionTerm.var_const, names, rels, consts),
    st.builds(PreconditionTerm.var_var, names, rels, names),
    st.builds(PreconditionTerm.offset, names, names, consts),
)


@given(terms)
def test_term_manifest_roundtrip(term):
    assert PreconditionTerm.parse(term.manifest()) == term


@pytest.mark.parametrize("text", [
    "pre variable-constant x <",
    "pre pointer-not-null p != 0",
    "pre bogus x < 1",
    "pre pointer-offset a == b*3",
    "pre variable-constant x < one",
])
def test_malformed_terms_are_rejected(text):
    with pytest.raises(ManifestError):
        PreconditionTerm.parse(text)


def test_term_arity_is_enforced():
    with pytest.raises(ValueError):
        PreconditionTerm("variable-constant", ("x",), "<")
    with pytest.raises(ValueError):
        PreconditionTerm("pointer-not-null", ("p",), "==")


DATA = CORPUS.parent / "tests" / "data"


def _record_copy_proof():
    """Frozen level-0 proof of the record_copy fixture."""
    return parse_manifest((DATA / "record_copy.proof").read_text())


@given(
    st.dictionaries(st.from_regex(r"process_record\.[0-9]", fullmatch=True), st.integers(1, 64), max_size=3),
    st.integers(1, 8),
    st.lists(st.builds(PreconditionTerm.var_const, st.just("dst_size"), rels, st.integers(0, 16)),
             max_size=3),
)
def test_manifest_roundtrip(bounds, default, pres):
    base = _record_copy_proof()
    proof = replace(base, bounds=LoopBoundMap.of(bounds, default),
                    env=base.env.add_preconditions(pres))
    text = serialize_manifest(proof)
    again = parse_manifest(text)
    assert again == proof
    assert serialize_manifest(again) == text


def test_manifest_requires_version_and_fenced_harness():
    text = serialize_manifest(_record_copy_proof())
    with pytest.raises(ManifestError):
        parse_manifest(text.replace("manifest_version = 1\n", ""))
    with pytest.raises(ManifestError):
        parse_manifest(text.rsplit("---harness---", 1)[0])


@pytest.mark.parametrize("spec", ["nondet u32", "alloc u8 size n_size max 16", "alloc i32 size 4", "none"])
def test_init_spec_roundtrip(spec):
    assert str(InitSpec.parse(spec)) == spec


def test_return_preconditions_route_into_models():
    env = EnvironmentModel((), (FunctionModel("get", 1, InitSpec("nondet", A.Ty("u32"))),))
    r = ret_symbol("get")
    env = env.add_preconditions([PreconditionTerm.var_const(r, "<=", 10),
                                 PreconditionTerm.var_const("n", ">", 0)])
    assert env.model("get").kind == 2
    assert [str(t) for t in env.model("get").return_preconditions] == ["ret_of(get) <= 10"]
    assert [str(t) for t in env.preconditions] == ["n > 0"]
    back = env.remove_precondition(PreconditionTerm.var_const(r, "<=", 10))
    assert back.model("get").kind == 1


def test_bounds_must_be_positive():
    with pytest.raises(ProofError):
        LoopBoundMap.of({"f.0": 0})
    with pytest.raises(ProofError):
        LoopBoundMap.of({}, 0)


def test_scope_must_contain_entry():
    with pytest.raises(ProofError):
        VerificationScope("f", frozenset({"g"}), frozenset({"a.mc"}))


def test_harness_must_call_entry_once():
    index = parse_project(CORPUS / "record_copy")
    proof = level0_proof(index, "process_record")
    twice = proof.harness.replace("process_record(dst);", "process_record(dst);\n  process_record(dst);")
    with pytest.raises(ProofError):
        assemble(proof.scope, proof.bounds, proof.env, twice, index)


def test_level0_record_copy_proof_is_structurally_valid():
    index = parse_project(CORPUS / "record_copy")
    proof = level0_proof(index, "process_record")
    assert check_structural_validity(proof, index).valid
    assert proof == _record_copy_proof()


def test_validity_flags_each_defect():
    index = parse_project(CORPUS / "record_copy")
    proof = level0_proof(index, "process_record")
    unmodeled = replace(proof, env=replace(proof.env, function_models=()))
    assert not check_structural_validity(unmodeled, index).compiles

    bad_havoc = proof.env.with_model(replace(proof.env.model("get_record_count"), side_effects=("nope",)))
    assert not check_structural_validity(replace(proof, env=bad_havoc), index).models_well_formed

    stray = proof.env.add_preconditions([PreconditionTerm.var_const("ghost", "<", 1)])
    report = check_structural_validity(replace(proof, env=stray), index)
    assert not report.valid
    assert any("ghost" in e for e in report.errors)


def test_proof_size_counts_harness_and_model_lines():
    proof = _record_copy_proof()
    harness_lines = len([ln for ln in proof.harness.splitlines() if ln.strip()])
    assert proof.size() == harness_lines + 3
    assert isinstance(proof, UnitProof)


def test_type_errors_make_proof_not_compile():
    index = index_of({"a.mc": "u32 f(u32 n) {\n  return n;\n}\n"})
    proof = level0_proof(index, "f")
    index.type_errors = ["a.mc:2:3: mismatched types"]
    assert not check_structural_validity(proof, index).compiles
