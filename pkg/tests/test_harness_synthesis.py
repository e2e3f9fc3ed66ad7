import pytest
from hypothesis import given, strategies as st

from conftest import index_of
from soupgen.harness import (
    HarnessError, external_callees, model_external_callees, size_symbol, synthesize_input_model,
    type1_model,
)
from soupgen.minic import ast as A
from soupgen.minic.parser import parse_source
from soupgen.proof import harness_symbols, parse_harness

TYPES = ["u8", "u32", "i32", "size_t", "u8*", "u32*", "i32*"]


@given(st.lists(st.sampled_from(TYPES), min_size=0, max_size=4), st.integers(1, 32))
def test_harness_declares_one_input_per_parameter(types, cap):
    params = ", ".join(f"{t} p{i}" for i, t in enumerate(types))
    entry = parse_source(f"void f({params}) {{\n}}\n").functions[0]
    src, specs = synthesize_input_model(entry, cap)
    hfn = parse_harness(src)
    syms = harness_symbols(hfn)
    assert [p for p, _ in specs] == [f"p{i}" for i in range(len(types))]
    for i, t in enumerate(types):
        assert str(syms[f"p{i}"]) == t
        spec = dict(specs)[f"p{i}"]
        if t.endswith("*"):
            assert spec.kind == "alloc" and spec.size == cap
            assert f"assume({spec.size_symbol} <= {cap});" in src
            assert f"assume(p{i} != NULL);" in src
        else:
            assert spec.kind == "nondet"
    assert src.count("f(") == 1


def test_size_symbol_avoids_parameter_names():
    assert size_symbol("buf", {"buf", "buf_size"}) == "buf_size_"
    entry = parse_source("void f(u8* buf, u32 buf_size) {\n}\n").functions[0]
    src, specs = synthesize_input_model(entry)
    assert dict(specs)["buf"].size_symbol == "buf_size_"
    parse_harness(src)


def test_wide_element_allocations_scale_by_width():
    entry = parse_source("void f(u32* words) {\n}\n").functions[0]
    src, _ = synthesize_input_model(entry)
    assert "malloc(words_size * 4)" in src


def test_type1_models_follow_return_types():
    unit = parse_source("u32 a();\nu8* b(u32 n);\nvoid c(u8* out);\n")
    by = {p.name: type1_model(p, 8) for p in unit.prototypes}
    assert str(by["a"].return_spec) == "nondet u32"
    assert str(by["b"].return_spec) == "alloc u8 size nondet max 8"
    assert str(by["c"].return_spec) == "none"
    assert all(m.kind == 1 for m in by.values())


def test_external_callees_exclude_scope_and_intrinsics():
    index = index_of({"a.mc": "u32 g();\nu32 f() {\n  u8* p = malloc(1);\n  free(p);\n  return g() + h();\n}\n"
                             "u32 h() {\n  return 1;\n}\n"})
    fns = [index.function("f")]
    assert external_callees(fns, {"f"}) == ["g", "h"]
    assert sorted(model_external_callees(fns, index)) == ["g", "h"]


def test_unknown_callee_signature_is_an_error():
    unit = parse_source("u32 f() {\n  return mystery();\n}\n", "a.mc")
    from soupgen.minic.index import build_index

    index = build_index([unit])
    with pytest.raises(HarnessError):
        model_external_callees(unit.functions, index)


def test_unsupported_parameter_types_are_rejected():
    entry = A.FunctionDef("f", [A.Param(A.Ty("u64"), "x")], A.VOID, A.Block([]))
    with pytest.raises(HarnessError):
        synthesize_input_model(entry)
