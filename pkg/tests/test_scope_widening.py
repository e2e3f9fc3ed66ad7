from conftest import CORPUS, index_of
from soupgen.agent import StageLog
from soupgen.engine import ResourceBudget
from soupgen.minic.index import parse_project
from soupgen.scope import init_scope, run_scope_stage, widen_by_one_file_level


def test_single_file_record_copy_starts_with_everything_reachable():
    index = parse_project(CORPUS / "record_copy_single")
    scope, bounds, env, harness = init_scope(index, "process_record")
    assert scope.functions == {"process_record", "handle_record", "get_record_count"}
    assert scope.level == 0
    assert env.function_models == ()
    assert bounds.default_bound == 1 and bounds.bounds == ()
    assert "process_record(dst);" in harness


def test_two_file_record_copy_models_the_count_source():
    index = parse_project(CORPUS / "record_copy")
    scope, _, env, _ = init_scope(index, "process_record")
    assert scope.files == {"record.mc"}
    assert [m.name for m in env.function_models] == ["get_record_count"]


def test_record_copy_widening_breaches_budget_and_keeps_level0():
    index = parse_project(CORPUS / "record_copy")
    log = StageLog()
    res = run_scope_stage(index, "process_record", 1, ResourceBudget(), slog=log)
    assert res.level == 0
    assert res.proof.scope.files == {"record.mc"}
    rejected = [e for e in log.events if e["event"] == "gate" and not e["accepted"]]
    assert [e["reason"] for e in rejected] == ["budget exceeded"]


def test_record_copy_widens_when_the_budget_allows():
    index = parse_project(CORPUS / "record_copy")
    res = run_scope_stage(index, "process_record", 1, ResourceBudget(state_budget=200_000))
    assert res.level == 1
    assert "get_record_count" in res.proof.scope.functions
    assert res.proof.env.function_models == ()


def test_budget_levels_fixture_returns_level1():
    index = parse_project(CORPUS / "budget_levels")
    res = run_scope_stage(index, "run", 2, ResourceBudget(max_file_depth=2))
    assert res.level == 1
    assert res.proof.scope.files == {"core/run.mc", "util/stage.mc"}


def test_state_budget_one_gives_no_scope():
    index = parse_project(CORPUS / "record_copy")
    assert run_scope_stage(index, "process_record", 3, ResourceBudget(state_budget=1)) is None


def test_widening_picks_definition_nearest_the_caller():
    index = index_of({
        "app/main.mc": "u32 decode();\nu32 main_entry() {\n  return decode();\n}\n",
        "app/codec/decode.mc": "u32 decode() {\n  return 1;\n}\n",
        "vendor/decode.mc": "u32 decode() {\n  return 2;\n}\n",
    })
    scope, *_ = init_scope(index, "main_entry")
    wider = widen_by_one_file_level(scope, index)
    assert wider.level == 1
    assert wider.files == {"app/main.mc", "app/codec/decode.mc"}


def test_widening_is_a_fixpoint_without_definitions():
    index = index_of({"a.mc": "u32 ext();\nu32 f() {\n  return ext();\n}\n"})
    scope, *_ = init_scope(index, "f")
    assert widen_by_one_file_level(scope, index) == scope
    res = run_scope_stage(index, "f", 3, ResourceBudget())
    assert res.level == 0
