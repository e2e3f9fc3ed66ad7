import json

import pytest

from conftest import corpus_fixtures, corpus_id, drop_effects, fixture_meta
from soupgen.agent import audit
from soupgen.minic.index import parse_project
from soupgen.pipeline import STAGE_FILES, match_exposure

FIXTURES = corpus_fixtures()
STAGES = ("stage1", "stage2", "stage3")


@pytest.mark.parametrize("fixture", FIXTURES, ids=corpus_id)
def test_stage_metrics_never_regress(fixture, corpus_runs):
    res, out = corpus_runs.get(fixture)
    assert res.exit_code == 0
    stages = json.loads((out / "metrics.json").read_text())["stages"]
    lines = [stages[s]["covered_lines"] for s in STAGES]
    ratios = [stages[s]["verified_ratio"] for s in STAGES]
    assert lines == sorted(lines)
    assert ratios == sorted(ratios)


@pytest.mark.parametrize("fixture", FIXTURES, ids=corpus_id)
def test_every_mutation_passed_a_gate(fixture, corpus_runs):
    res, out = corpus_runs.get(fixture)
    assert audit(res.log.events) == []
    events = json.loads((out / "stagelog.json").read_text())["events"]
    accepted = {e["gate_id"] for e in events if e["event"] == "gate" and e["accepted"]}
    assert all(e["gate_id"] in accepted for e in events if e["event"] == "mutation")


@pytest.mark.parametrize("fixture", FIXTURES, ids=corpus_id)
def test_repeated_runs_are_byte_identical(fixture, corpus_runs):
    _, a = corpus_runs.get(fixture, "a")
    _, b = corpus_runs.get(fixture, "b")
    for name in STAGE_FILES + ("errors.json",):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


@pytest.mark.parametrize("fixture", FIXTURES, ids=corpus_id)
def test_each_final_precondition_is_needed(fixture, corpus_runs):
    res, _ = corpus_runs.get(fixture)
    snap = res.snapshot("stage3")
    index = parse_project(fixture)
    for term, new_ids, more_paths in drop_effects(snap, index):
        assert new_ids or more_paths, f"{term} can be dropped"


SEEDED = [f for f in FIXTURES if "expect" in fixture_meta(f)]


@pytest.mark.parametrize("fixture", SEEDED, ids=corpus_id)
def test_seeded_sinks_match_expectation(fixture, corpus_runs):
    meta = fixture_meta(fixture)
    _, out = corpus_runs.get(fixture)
    for sink in meta["sinks"]:
        doc = match_exposure(out / "errors.json", sink)
        assert doc["exposed"] is (meta["expect"] == "exposed"), doc


def test_seeded_set_spans_enough_kinds():
    exposed = [f for f in SEEDED if fixture_meta(f)["expect"] == "exposed"]
    kinds = {s.rsplit(":", 1)[1] for f in exposed for s in fixture_meta(f)["sinks"]}
    assert len(exposed) == 10 and len(kinds) >= 6
    assert sum(fixture_meta(f)["expect"] == "not-exposed" for f in SEEDED) == 2
