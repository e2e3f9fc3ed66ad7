import pytest
from hypothesis import given, settings, strategies as st

from conftest import CORPUS, index_of
from progs import random_program
from soupgen.minic import ast as A
from soupgen.minic.index import (
    ProjectError, build_call_graph, callsites_of, common_prefix_len, parse_project, pick_definition,
)
from soupgen.minic.parser import MiniCSyntaxError, parse_source, tokenize
from soupgen.minic.printer import expr_str, unit_str


@given(st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_print_parse_roundtrip(seed):
    unit = parse_source(random_program(seed), "comp.mc")
    again = parse_source(unit_str(unit), "comp.mc")
    assert again.functions == unit.functions


@given(st.recursive(
    st.integers(0, 300).map(str) | st.sampled_from(["a", "b", "c"]),
    lambda inner: st.tuples(inner, st.sampled_from(["+", "-", "*", "/", "<<", "&&", "<", "=="]),
                            inner).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
    max_leaves=8))
def test_expression_printing_is_a_fixpoint(text):
    src = f"u32 f(u32 a, u32 b, u32 c) {{\n  return {text};\n}}\n"
    ret = parse_source(src).functions[0].body.stmts[0]
    printed = expr_str(ret.value)
    ret2 = parse_source(f"u32 f(u32 a, u32 b, u32 c) {{\n  return {printed};\n}}\n").functions[0].body.stmts[0]
    assert ret2.value == ret.value
    assert expr_str(ret2.value) == printed


def test_syntax_error_carries_position():
    with pytest.raises(MiniCSyntaxError) as info:
        parse_source("u32 f() {\n  return 1 +;\n}\n", "bad.mc")
    assert (info.value.path, info.value.line) == ("bad.mc", 2)


def test_illegal_character_is_rejected():
    with pytest.raises(MiniCSyntaxError) as info:
        tokenize("u32 x;\nu32 y = @;", "c.mc")
    assert (info.value.line, info.value.col) == (2, 9)


def test_loop_ids_follow_source_order():
    unit = parse_source(
        "void f(u32 n) {\n  for (u32 i = 0; i < n; i++) {\n    while (n > 0) {\n      n--;\n    }\n  }\n}\n")
    fn = unit.functions[0]
    assert [lp.id for lp in fn.loops] == ["f.0", "f.1"]
    assert fn.loops[0].header_line == 2


def test_config_and_prototype_declarations():
    unit = parse_source("config MODE in {0, 5} = 0;\nvoid read_status(u8* out);\n"
                        "u32 get() {\n  return MODE;\n}\n")
    assert unit.configs[0].name == "MODE"
    assert unit.configs[0].candidates == (0, 5)
    assert [p.name for p in unit.prototypes] == ["read_status"]


def test_type_errors_are_reported():
    from soupgen.minic.index import build_index
    from soupgen.minic.typecheck import check_project

    index = build_index([parse_source("u32 f(u8* p) {\n  u32 x = p;\n  return x;\n}\n", "t.mc")])
    errors = check_project(index)
    assert errors and errors[0].startswith("t.mc:2:")


def test_record_copy_call_graph():
    index = parse_project(CORPUS / "record_copy")
    graph = build_call_graph(index)
    assert callsites_of(index, "process_record", graph) == [
        (("record.mc", "caller"), ("record.mc", 17, 3))]
    sites = callsites_of(index, "get_record_count", graph)
    assert [s[0] for s in sites] == [("record.mc", "process_record")]
    with pytest.raises(ProjectError):
        callsites_of(index, "missing")


def test_definition_choice_prefers_longest_common_prefix():
    index = index_of({
        "net/wifi/scan.mc": "u32 parse() {\n  return 1;\n}\n",
        "net/eth/parse.mc": "u32 parse() {\n  return 2;\n}\n",
        "net/wifi/core.mc": "u32 run() {\n  return parse();\n}\n",
    })
    assert pick_definition(index, "parse", "net/wifi/core.mc").file == "net/wifi/scan.mc"
    assert pick_definition(index, "parse", "net/eth/x.mc").file == "net/eth/parse.mc"
    assert common_prefix_len("a/b/c.mc", "a/b/d.mc") == 2
    assert common_prefix_len("a/x.mc", "b/x.mc") == 0


def test_duplicate_function_in_one_file_is_rejected():
    from soupgen.minic.index import build_index

    unit = parse_source("u32 f() {\n  return 1;\n}\nu32 f() {\n  return 2;\n}\n", "d.mc")
    with pytest.raises(ProjectError):
        build_index([unit])


def test_iter_stmts_visits_nested_blocks():
    fn = parse_source("void f(u32 n) {\n  if (n > 1) {\n    n = 2;\n  } else {\n    n = 3;\n  }\n}\n").functions[0]
    kinds = [type(s).__name__ for s in A.iter_stmts(fn.body)]
    assert kinds.count("ExprStmt") == 2
